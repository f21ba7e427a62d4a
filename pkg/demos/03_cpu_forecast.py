"""
Forecasting CPU usage with an LSTM
==================================

The default synthetic workload has a daily cycle, random bursts and a little
noise. A one-step-ahead LSTM should beat the naive "same as last sample"
forecast. Takes about 15 s on one core.
"""

import numpy as np

from gridseer.catalog import QuestionId, resolve_question
from gridseer.pipeline import train_question
from gridseer.synth import SynthConfig, gen_node
from gridseer.telemetry import build_series

records, truth = gen_node(SynthConfig())
series = build_series(records, "n0", 60)

cpu = series.column("cpu_pct")
lag = lambda k: np.corrcoef(cpu[:-k], cpu[k:])[0, 1]  # noqa: E731
print(f"autocorrelation: 1 h {lag(60):.3f}, 1 day {lag(1440):.3f}")

spec = resolve_question(QuestionId.CPU_FORECAST)
outcome = train_question(spec, series)
print("loss per epoch:", np.round(outcome.history, 4))
print(f"LSTM test MAE {outcome.test_metrics.mae:.2f} pp")
print(f"persistence   {outcome.baseline_metrics.mae:.2f} pp")
