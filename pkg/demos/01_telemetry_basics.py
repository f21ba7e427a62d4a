"""
Telemetry in, tidy series out
=============================

Generate a week of synthetic node telemetry, parse it back from CSV,
downsample it to daily buckets and look for outliers.
"""

import numpy as np

from gridseer.synth import SynthConfig, gen_node
from gridseer.telemetry import NUMERIC_COLUMNS, Agg, Resolution, ZScore, build_series, flag_outliers, parse_csv, resample, serialize_csv, split

records, truth = gen_node(SynthConfig(duration=7 * 86400, interval=300, seed=1))
print(len(records), "records for node", truth.node_id)

# The CSV round trip is exact, numbers are written in shortest repr
text = serialize_csv(records)
print(text.decode().splitlines()[0])
assert parse_csv(text) == records

series = build_series(records, "n0", 300)
print("grid:", len(series), "rows every", series.interval, "s")

# Daily min / mean / max of power draw
for agg in (Agg.MIN, Agg.MEAN, Agg.MAX):
    daily = resample(series, Resolution.DAILY, agg)
    print(f"{agg.value:>4}", np.round(daily.column("power_w"), 1))

# Weekly buckets start on Monday, so a Tuesday start leaves no full week here
try:
    resample(series, Resolution.WEEKLY)
except Exception as exc:
    print("weekly:", type(exc).__name__)

# A spike that would wreck min-max scaling shows up at 6 sd
series.values[100, NUMERIC_COLUMNS.index("power_w")] = 5000.0
mask = flag_outliers(series, ZScore(6))
print("flagged rows:", np.flatnonzero(mask.flags))

train, test = split(series)
print("train/test:", len(train), len(test))
