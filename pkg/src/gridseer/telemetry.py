"""Per-node telemetry: CSV ingestion, regular series, resampling, splitting.

Timestamps are handled as integer seconds since the Unix epoch (UTC) once
they leave the CSV layer.
"""

from __future__ import annotations

import calendar
import enum
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadTimestamp,
    DuplicateTimestamp,
    GapExceedsLimit,
    MalformedField,
    MissingHeader,
    NoRecordsForNode,
    OutOfRange,
    RaggedRow,
    RowError,
    SeriesTooShort,
    SpanTooShort,
)

HEADER = (
    "timestamp",
    "node_id",
    "cpu_pct",
    "mem_pct",
    "disk_io_mbps",
    "disk_used_pct",
    "net_mbps",
    "power_w",
    "temp_c",
)
NUMERIC_COLUMNS = HEADER[2:]
PERCENT_COLUMNS = ("cpu_pct", "mem_pct", "disk_used_pct")
NONNEGATIVE_COLUMNS = ("disk_io_mbps", "net_mbps", "power_w")
OPTIONAL_COLUMNS = ("power_w", "temp_c")

DAY = 86400
WEEK = 7 * DAY
# Nominal interval recorded on monthly series; bucket starts are explicit.
MONTH_NOMINAL = 2629746
MAX_GAP = DAY


class Resolution(str, enum.Enum):
    RAW = "Raw"
    DAILY = "Daily"
    WEEKLY = "Weekly"
    MONTHLY = "Monthly"


class Agg(str, enum.Enum):
    MIN = "Min"
    MEAN = "Mean"
    MAX = "Max"


# ---------------------------------------------------------------------------
# timestamps


def parse_timestamp(text: str) -> int:
    """Parse an ISO 8601 UTC instant (``Z`` or ``+00:00``) to epoch seconds."""
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None or dt.utcoffset().total_seconds() != 0:
        raise ValueError("timestamp must be UTC")
    if dt.microsecond:
        raise ValueError("timestamp must have second precision")
    return calendar.timegm(dt.utctimetuple())


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def format_number(value: float) -> str:
    """Shortest round-tripping positional decimal for ``value``."""
    return np.format_float_positional(float(value), trim="-")


# ---------------------------------------------------------------------------
# records and CSV


@dataclass(frozen=True)
class TelemetryRecord:
    timestamp: int
    node_id: str
    cpu_pct: float
    mem_pct: float
    disk_io_mbps: float
    disk_used_pct: float
    net_mbps: float
    power_w: float | None = None
    temp_c: float | None = None

    def __post_init__(self):
        check_record(self)

    def value(self, column: str) -> float | None:
        return getattr(self, column)


def check_record(rec: TelemetryRecord, row: int = 0) -> None:
    if not isinstance(rec.node_id, str) or not rec.node_id:
        raise MalformedField(row, "node_id must be a non-empty string", "node_id")
    for col in NUMERIC_COLUMNS:
        v = rec.value(col)
        if v is None:
            if col not in OPTIONAL_COLUMNS:
                raise MalformedField(row, "required value missing", col)
            continue
        if not math.isfinite(v):
            raise OutOfRange(row, f"non-finite value {v!r}", col)
        if col in PERCENT_COLUMNS and not 0.0 <= v <= 100.0:
            raise OutOfRange(row, f"{v!r} outside [0, 100]", col)
        if col in NONNEGATIVE_COLUMNS and v < 0.0:
            raise OutOfRange(row, f"{v!r} is negative", col)


def parse_csv(raw: bytes | str) -> list[TelemetryRecord]:
    """Parse telemetry CSV into records, preserving row order.

    Raises ``MissingHeader`` when the first line is not exactly the fixed
    header, and row-level errors (``BadTimestamp``, ``OutOfRange``,
    ``RaggedRow``, ``MalformedField``) carrying the 1-based data row.
    """
    text = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
    if text.startswith("\ufeff"):
        text = text[1:]
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]
    if not lines or tuple(c.strip() for c in lines[0].split(",")) != HEADER:
        raise MissingHeader(f"first line must be exactly: {','.join(HEADER)}")

    records = []
    for row, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(HEADER):
            raise RaggedRow(row, f"expected {len(HEADER)} cells, got {len(cells)}")
        try:
            ts = parse_timestamp(cells[0])
        except ValueError as exc:
            raise BadTimestamp(row, f"{cells[0]!r}: {exc}", "timestamp") from None
        values = {}
        for col, cell in zip(NUMERIC_COLUMNS, cells[2:]):
            cell = cell.strip()
            if cell == "":
                values[col] = None
                continue
            try:
                values[col] = float(cell)
            except ValueError:
                raise MalformedField(row, f"not a number: {cell!r}", col) from None
        try:
            rec = TelemetryRecord(ts, cells[1].strip(), **values)
        except RowError as exc:
            raise type(exc)(row, exc.detail, exc.column) from None
        records.append(rec)
    return records


def serialize_csv(records: Iterable[TelemetryRecord]) -> bytes:
    out = io.StringIO()
    out.write(",".join(HEADER) + "\n")
    for rec in records:
        cells = [format_timestamp(rec.timestamp), rec.node_id]
        for col in NUMERIC_COLUMNS:
            v = rec.value(col)
            cells.append("" if v is None else format_number(v))
        out.write(",".join(cells) + "\n")
    return out.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# series


@dataclass
class TelemetrySeries:
    """Regular-interval numeric series for one node.

    ``values`` has one column per entry in ``columns``; absent optional
    readings are NaN. ``bucket_starts`` is only set for monthly series, whose
    rows are not evenly spaced.
    """

    node_id: str
    interval: int
    start: int
    values: np.ndarray
    resolution: Resolution = Resolution.RAW
    columns: tuple[str, ...] = NUMERIC_COLUMNS
    bucket_starts: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def timestamps(self) -> np.ndarray:
        if self.bucket_starts is not None:
            return self.bucket_starts
        return self.start + self.interval * np.arange(len(self), dtype=np.int64)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def has_column(self, name: str) -> bool:
        return name in self.columns and not np.isnan(self.column(name)).all()

    def slice(self, lo: int, hi: int) -> TelemetrySeries:
        ts = self.timestamps
        lo, hi, _ = slice(lo, hi).indices(len(self))
        start = int(ts[lo]) if lo < len(ts) else self.start + lo * self.interval
        return TelemetrySeries(
            node_id=self.node_id,
            interval=self.interval,
            start=start,
            values=self.values[lo:hi].copy(),
            resolution=self.resolution,
            columns=self.columns,
            bucket_starts=None if self.bucket_starts is None else self.bucket_starts[lo:hi].copy(),
        )


def build_series(records: Sequence[TelemetryRecord], node_id: str, interval: int) -> TelemetrySeries:
    """Place one node's records on a regular grid starting at its first record.

    Missing grid points are filled by linear interpolation, provided no gap
    between consecutive records exceeds 24 h.
    """
    if interval <= 0:
        raise ValueError("interval must be positive")
    mine = sorted((r for r in records if r.node_id == node_id), key=lambda r: r.timestamp)
    if not mine:
        raise NoRecordsForNode(f"no records for node {node_id!r}")
    ts = np.array([r.timestamp for r in mine], dtype=np.int64)
    dup = np.flatnonzero(np.diff(ts) == 0)
    if dup.size:
        raise DuplicateTimestamp(f"node {node_id!r}: duplicate timestamp {format_timestamp(ts[dup[0]])}")
    gaps = np.diff(ts)
    if gaps.size and gaps.max() > MAX_GAP:
        i = int(np.argmax(gaps))
        raise GapExceedsLimit(
            f"node {node_id!r}: {int(gaps[i])} s gap after {format_timestamp(ts[i])} exceeds {MAX_GAP} s"
        )
    raw = np.array(
        [[np.nan if r.value(c) is None else r.value(c) for c in NUMERIC_COLUMNS] for r in mine],
        dtype=np.float64,
    )
    start = int(ts[0])
    n = int((ts[-1] - start) // interval) + 1
    grid = start + interval * np.arange(n, dtype=np.int64)
    if n == len(ts) and np.array_equal(grid, ts):
        values = raw
    else:
        values = np.full((n, len(NUMERIC_COLUMNS)), np.nan)
        for j in range(len(NUMERIC_COLUMNS)):
            known = ~np.isnan(raw[:, j])
            if not known.any():
                continue
            kt, kv = ts[known], raw[known, j]
            inside = (grid >= kt[0]) & (grid <= kt[-1])
            values[inside, j] = np.interp(grid[inside], kt, kv)
    return TelemetrySeries(node_id=node_id, interval=interval, start=start, values=values)


# ---------------------------------------------------------------------------
# calendar buckets


def bucket_keys(timestamps: np.ndarray, resolution: Resolution) -> np.ndarray:
    """Integer bucket index per timestamp (days, Monday-weeks or months since epoch)."""
    ts = np.asarray(timestamps, dtype=np.int64)
    days = ts // DAY
    resolution = Resolution(resolution)
    if resolution is Resolution.DAILY:
        return days
    if resolution is Resolution.WEEKLY:
        # 1970-01-01 was a Thursday; shift so weeks start on Monday.
        return (days + 3) // 7
    if resolution is Resolution.MONTHLY:
        return ts.astype("datetime64[s]").astype("datetime64[M]").astype(np.int64)
    raise ValueError(f"not a bucketing resolution: {resolution}")


def bucket_bounds(key: int, resolution: Resolution) -> tuple[int, int]:
    """[start, end) epoch seconds of a bucket index."""
    resolution = Resolution(resolution)
    if resolution is Resolution.DAILY:
        return key * DAY, (key + 1) * DAY
    if resolution is Resolution.WEEKLY:
        lo = (key * 7 - 3) * DAY
        return lo, lo + WEEK
    if resolution is Resolution.MONTHLY:
        lo = np.datetime64(int(key), "M").astype("datetime64[s]").astype(np.int64)
        hi = np.datetime64(int(key) + 1, "M").astype("datetime64[s]").astype(np.int64)
        return int(lo), int(hi)
    raise ValueError(f"not a bucketing resolution: {resolution}")


def group_runs(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start offsets and keys of runs of equal consecutive keys."""
    if keys.size == 0:
        return np.zeros(0, dtype=np.int64), keys
    starts = np.concatenate(([0], np.flatnonzero(np.diff(keys)) + 1))
    return starts, keys[starts]


def fold(values: np.ndarray, starts: np.ndarray, agg: Agg) -> np.ndarray:
    agg = Agg(agg)
    if agg is Agg.MIN:
        return np.minimum.reduceat(values, starts, axis=0)
    if agg is Agg.MAX:
        return np.maximum.reduceat(values, starts, axis=0)
    counts = np.diff(np.append(starts, values.shape[0]))
    sums = np.add.reduceat(values, starts, axis=0)
    return sums / (counts[:, None] if sums.ndim == 2 else counts)


def resample(
    series: TelemetrySeries,
    resolution: Resolution,
    agg: Agg = Agg.MEAN,
    drop_partial: bool = True,
) -> TelemetrySeries:
    """Aggregate a raw series into calendar buckets (UTC), one row per bucket.

    With ``drop_partial`` a bucket is kept only if the series covers all of
    its grid slots: the first sample is at or before the bucket start and the
    last sample reaches the final slot before the bucket end. Leading and
    trailing partial buckets are therefore dropped.
    """
    resolution = Resolution(resolution)
    if series.resolution is not Resolution.RAW:
        raise ValueError("resample expects a raw series")
    ts = series.timestamps
    keys = bucket_keys(ts, resolution)
    starts, uniq = group_runs(keys)
    rows = fold(series.values, starts, agg)
    if drop_partial:
        first, last = int(ts[0]), int(ts[-1])
        keep = []
        for k in uniq:
            lo, hi = bucket_bounds(int(k), resolution)
            keep.append(first <= lo and last >= hi - series.interval)
        keep = np.array(keep, dtype=bool)
        rows, uniq = rows[keep], uniq[keep]
    if rows.shape[0] == 0:
        raise SpanTooShort(f"series does not span a full {resolution.value.lower()} bucket")
    bstarts = np.array([bucket_bounds(int(k), resolution)[0] for k in uniq], dtype=np.int64)
    interval = {Resolution.DAILY: DAY, Resolution.WEEKLY: WEEK}.get(resolution, MONTH_NOMINAL)
    return TelemetrySeries(
        node_id=series.node_id,
        interval=interval,
        start=int(bstarts[0]),
        values=rows,
        resolution=resolution,
        columns=series.columns,
        bucket_starts=bstarts if resolution is Resolution.MONTHLY else None,
    )


# ---------------------------------------------------------------------------
# splitting and outliers


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    contiguous: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if not self.contiguous:
            raise ValueError("only contiguous chronological splits are supported")

    def train_size(self, n: int) -> int:
        # rounding guards 0.7 * 100 style products against representation error
        return math.floor(round(self.train_fraction * n, 9))


def split(series: TelemetrySeries, spec: SplitSpec = SplitSpec()) -> tuple[TelemetrySeries, TelemetrySeries]:
    n = len(series)
    if n < 4:
        raise SeriesTooShort(f"need at least 4 rows to split, got {n}")
    k = spec.train_size(n)
    if k == 0 or k == n:
        raise SeriesTooShort(f"fraction {spec.train_fraction} leaves an empty side for {n} rows")
    return series.slice(0, k), series.slice(k, n)


@dataclass(frozen=True)
class ZScore:
    threshold: float


OutlierPolicy = ZScore | None


@dataclass(frozen=True)
class OutlierMask:
    flags: np.ndarray
    policy: OutlierPolicy

    def __len__(self) -> int:
        return len(self.flags)

    @property
    def count(self) -> int:
        return int(self.flags.sum())


def flag_outliers(series: TelemetrySeries, policy: OutlierPolicy = None) -> OutlierMask:
    """Flag rows where any column lies more than ``threshold`` population
    standard deviations from its mean. Zero-variance and absent columns never
    flag. The series itself is left untouched."""
    flags = np.zeros(len(series), dtype=bool)
    if policy is None:
        return OutlierMask(flags, policy)
    for j in range(series.values.shape[1]):
        col = series.values[:, j]
        known = ~np.isnan(col)
        if not known.any():
            continue
        mean = col[known].mean()
        std = col[known].std()
        if std == 0.0:
            continue
        dev = np.zeros_like(col)
        dev[known] = np.abs(col[known] - mean)
        flags |= dev > policy.threshold * std
    return OutlierMask(flags, policy)


def infer_interval(records: Sequence[TelemetryRecord], node_id: str) -> int:
    """Most common positive spacing between one node's consecutive records."""
    ts = np.array(sorted(r.timestamp for r in records if r.node_id == node_id), dtype=np.int64)
    if ts.size == 0:
        raise NoRecordsForNode(f"no records for node {node_id!r}")
    d = np.diff(ts)
    d = d[d > 0]
    if d.size == 0:
        return 60
    vals, counts = np.unique(d, return_counts=True)
    return int(vals[np.argmax(counts)])


def node_ids(records: Iterable[TelemetryRecord]) -> list[str]:
    """Distinct node ids in order of first appearance."""
    return list(dict.fromkeys(r.node_id for r in records))
