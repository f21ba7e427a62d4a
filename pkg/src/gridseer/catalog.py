"""Question catalog: which features answer which operator question, plus the
cluster, summary, surface and merge operations built on trained models."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AllZeroWeights,
    ArchitectureMismatch,
    BadRange,
    EmptyCluster,
    LengthMismatch,
    MissingFeatureColumn,
    SeriesShorterThanLookback,
    WrongInputDim,
)
from .models import LstmParams, MlpParams, NormStats, denormalize, make_windows, normalize_apply, predict
from .telemetry import Resolution, TelemetrySeries, bucket_bounds, bucket_keys, format_number, format_timestamp, group_runs


class QuestionId(str, enum.Enum):
    NODE_POWER = "NodePower"
    CLUSTER_POWER = "ClusterPower"
    RESOURCE_USAGE = "ResourceUsage"
    TEMPERATURE = "Temperature"
    NETWORK_ENERGY = "NetworkEnergy"
    CPU_FORECAST = "CpuForecast"


class ModelFamily(str, enum.Enum):
    MLP = "Mlp"
    LSTM = "Lstm"


RESOURCE_TARGETS = ("cpu_pct", "mem_pct", "disk_io_mbps", "net_mbps")


@dataclass(frozen=True)
class QuestionSpec:
    id: QuestionId
    features: tuple[str, ...]
    target: str
    model_family: ModelFamily
    resolution: Resolution = Resolution.RAW

    def __post_init__(self):
        if not self.features:
            raise ValueError("a question needs at least one feature")
        autoregressive = self.id is QuestionId.CPU_FORECAST
        if autoregressive != (self.model_family is ModelFamily.LSTM):
            raise ValueError("CpuForecast is the only LSTM question")
        # the forecaster reads the target's own history; regressors must not
        if not autoregressive and self.target in self.features:
            raise ValueError("target cannot also be a feature")

    @property
    def columns(self) -> tuple[str, ...]:
        """Columns covered by the model's normalization statistics."""
        if self.target in self.features:
            return self.features
        return self.features + (self.target,)


def resolve_question(qid: QuestionId | str, target: str | None = None) -> QuestionSpec:
    """Fixed binding from question to features, target and model family.

    ``target`` only matters for ResourceUsage, which stands for four separate
    models (cpu, memory, disk I/O, network); it defaults to ``cpu_pct``.
    """
    qid = QuestionId(qid)
    mlp, lstm = ModelFamily.MLP, ModelFamily.LSTM
    if qid is QuestionId.RESOURCE_USAGE:
        target = target or "cpu_pct"
        if target not in RESOURCE_TARGETS:
            raise ValueError(f"ResourceUsage target must be one of {RESOURCE_TARGETS}")
        return QuestionSpec(qid, tuple(c for c in RESOURCE_TARGETS if c != target), target, mlp)
    table = {
        QuestionId.NODE_POWER: (("cpu_pct", "net_mbps"), "power_w", mlp),
        QuestionId.CLUSTER_POWER: (("cpu_pct", "net_mbps"), "power_w", mlp),
        QuestionId.TEMPERATURE: (("cpu_pct", "mem_pct", "disk_io_mbps", "disk_used_pct"), "temp_c", mlp),
        QuestionId.NETWORK_ENERGY: (("net_mbps",), "power_w", mlp),
        QuestionId.CPU_FORECAST: (("cpu_pct",), "cpu_pct", lstm),
    }
    features, default_target, family = table[qid]
    if target is not None and target != default_target:
        raise ValueError(f"{qid.value} always targets {default_target}")
    return QuestionSpec(qid, features, default_target, family)


def resource_usage_specs() -> list[QuestionSpec]:
    return [resolve_question(QuestionId.RESOURCE_USAGE, t) for t in RESOURCE_TARGETS]


# ---------------------------------------------------------------------------
# datasets and prediction


def feature_matrix(spec: QuestionSpec, series: TelemetrySeries) -> np.ndarray:
    cols = []
    for name in spec.features:
        if not series.has_column(name):
            raise MissingFeatureColumn(f"series lacks feature column {name!r}")
        col = series.column(name)
        if np.isnan(col).any():
            raise MissingFeatureColumn(f"feature column {name!r} has missing values")
        cols.append(col)
    return np.column_stack(cols)


def model_inputs(spec: QuestionSpec, params, stats: NormStats, series: TelemetrySeries) -> np.ndarray:
    """Normalized model inputs: rows for an MLP, all full windows for an LSTM."""
    x = normalize_apply(stats.subset(spec.features), feature_matrix(spec, series))
    if isinstance(params, LstmParams):
        if len(series) < params.lookback:
            raise SeriesShorterThanLookback(f"series has {len(series)} rows, lookback is {params.lookback}")
        return make_windows(x, params.lookback, with_targets=False)
    return x


def predict_series(spec: QuestionSpec, params, stats: NormStats, series: TelemetrySeries) -> np.ndarray:
    """Predictions in target units.

    An MLP yields one value per row. An LSTM yields one value per full
    lookback window, each forecasting the row right after its window, so the
    last value is a forecast one interval past the end of the series.
    """
    z = predict(params, model_inputs(spec, params, stats, series))
    return denormalize(stats.subset([spec.target]), z[:, None])[:, 0]


def prediction_timestamps(params, series: TelemetrySeries) -> np.ndarray:
    ts = series.timestamps
    if isinstance(params, LstmParams):
        return np.append(ts[params.lookback :], ts[-1] + series.interval)
    return ts


# ---------------------------------------------------------------------------
# cluster aggregation and summaries


def aggregate_cluster(node_predictions: Sequence[Sequence[float]]) -> np.ndarray:
    """Cluster total as the element-wise sum of aligned node predictions."""
    if len(node_predictions) == 0:
        raise EmptyCluster("need at least one node")
    arrays = [np.asarray(p, dtype=np.float64) for p in node_predictions]
    n = arrays[0].shape
    total = arrays[0].copy()
    for a in arrays[1:]:
        if a.shape != n:
            raise LengthMismatch(f"node prediction lengths differ: {n} vs {a.shape}")
        total += a
    return total


@dataclass(frozen=True)
class SummaryRow:
    period_start: int
    min: float
    avg: float
    max: float


def summarize(predictions, timestamps, resolution: Resolution = Resolution.DAILY) -> list[SummaryRow]:
    """Min / mean / max of predictions per UTC calendar bucket."""
    y = np.asarray(predictions, dtype=np.float64)
    ts = np.asarray(timestamps, dtype=np.int64)
    if y.shape != ts.shape:
        raise LengthMismatch(f"{y.size} predictions for {ts.size} timestamps")
    if y.size == 0:
        return []
    resolution = Resolution(resolution)
    order = np.argsort(ts, kind="stable")
    y, ts = y[order], ts[order]
    starts, keys = group_runs(bucket_keys(ts, resolution))
    mins = np.minimum.reduceat(y, starts)
    maxs = np.maximum.reduceat(y, starts)
    counts = np.diff(np.append(starts, y.size))
    means = np.add.reduceat(y, starts) / counts
    # a mean can round just outside [min, max] when all values are equal
    means = np.clip(means, mins, maxs)
    return [
        SummaryRow(bucket_bounds(int(k), resolution)[0], float(lo), float(m), float(hi))
        for k, lo, m, hi in zip(keys, mins, means, maxs)
    ]


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    out = io.StringIO()
    out.write("period_start,min,avg,max\n")
    for r in rows:
        out.write(f"{format_timestamp(r.period_start)},{format_number(r.min)},{format_number(r.avg)},{format_number(r.max)}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# response surface


@dataclass(frozen=True)
class SurfaceGrid:
    x_axis_name: str
    y_axis_name: str
    x_values: np.ndarray
    y_values: np.ndarray
    z: np.ndarray  # (len(y_values), len(x_values))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"{self.y_axis_name}\\{self.x_axis_name}," + ",".join(format_number(v) for v in self.x_values) + "\n")
        for yv, row in zip(self.y_values, self.z):
            out.write(format_number(yv) + "," + ",".join(format_number(v) for v in row) + "\n")
        return out.getvalue()


def surface(params: MlpParams, stats: NormStats, x_range, y_range, n: int = 50) -> SurfaceGrid:
    """Tabulate a two-input regressor over an evenly spaced grid.

    ``stats`` covers the two inputs followed by the target, in that order;
    grid values are in the original units of each.
    """
    if not isinstance(params, MlpParams) or params.input_dim != 2:
        raise WrongInputDim("surface needs a two-input MLP")
    if n < 2:
        raise ValueError("need at least 2 points per axis")
    for lo, hi in (x_range, y_range):
        if not lo < hi:
            raise BadRange(f"range ({lo}, {hi}) is empty or reversed")
    xs = np.linspace(x_range[0], x_range[1], n)
    ys = np.linspace(y_range[0], y_range[1], n)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    x_name, y_name = stats.columns[0], stats.columns[1]
    z = predict(params, normalize_apply(stats.subset([x_name, y_name]), pts))
    z = denormalize(stats.subset([stats.columns[-1]]), z[:, None])[:, 0]
    return SurfaceGrid(x_name, y_name, xs, ys, z.reshape(n, n))


# ---------------------------------------------------------------------------
# joint training by parameter averaging


def merge_models(params_list: Sequence, weights: Sequence[float] | None = None):
    """Weighted average of structurally identical models, tensor by tensor.

    Computed as ``p0 + sum_k w_k (p_k - p0) / sum(w)`` so that merging
    identical models returns them bit for bit.
    """
    if not params_list:
        raise ArchitectureMismatch("nothing to merge")
    if weights is None:
        weights = [1.0] * len(params_list)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(params_list),):
        raise LengthMismatch("one weight per model required")
    if np.any(w < 0) or not np.isfinite(w).all():
        raise ValueError("weights must be finite and non-negative")
    total = float(w.sum())
    if total <= 0:
        raise AllZeroWeights("weights sum to zero")
    first = params_list[0]
    for p in params_list[1:]:
        if type(p) is not type(first) or p.architecture() != first.architecture():
            raise ArchitectureMismatch(f"{first.architecture()} vs {getattr(p, 'architecture', lambda: p)()}")
    base = first.tensors()
    merged = []
    for k, t0 in enumerate(base):
        acc = t0.copy()
        for wi, p in zip(w, params_list):
            if wi:
                acc += (wi / total) * (p.tensors()[k] - t0)
        merged.append(acc)
    return first.with_tensors(merged)
