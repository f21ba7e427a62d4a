"""Publisher-side workflow: series -> chronological split -> fit -> evaluate -> bundle."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace

import numpy as np

from .bundle import ModelBundle, make_manifest
from .catalog import ModelFamily, QuestionSpec, feature_matrix, predict_series
from .errors import EmptyDataset, InvalidInput
from .models import (
    LstmParams,
    Metrics,
    NormStats,
    TrainConfig,
    evaluate,
    init_lstm,
    init_mlp,
    make_windows,
    normalize_apply,
    normalize_fit,
    r2,
    train,
)
from .telemetry import SplitSpec, TelemetrySeries, format_timestamp, split

MLP_HIDDEN = (32, 32)
LSTM_HIDDEN = 32
LSTM_LOOKBACK = 48

DEFAULT_CONFIGS = {
    ModelFamily.MLP: TrainConfig(epochs=100, learning_rate=0.01, batch_size=32, early_stop_patience=20),
    ModelFamily.LSTM: TrainConfig(epochs=30, learning_rate=0.01, batch_size=64, early_stop_patience=5),
}


def default_config(family: ModelFamily, **overrides) -> TrainConfig:
    return replace(DEFAULT_CONFIGS[ModelFamily(family)], **overrides)


@dataclass
class TrainOutcome:
    bundle: ModelBundle
    history: list[float]
    test_metrics: Metrics
    test_metrics_normalized: Metrics
    test_r2: float
    baseline_metrics: Metrics | None  # last-value persistence, forecasting only
    n_train: int
    n_test: int


def training_stats(spec: QuestionSpec, train_part: TelemetrySeries) -> NormStats:
    cols = [train_part.column(c) for c in spec.columns]
    return normalize_fit(np.column_stack(cols), spec.columns)


def training_data(spec: QuestionSpec, stats: NormStats, series: TelemetrySeries, lookback: int | None = None):
    """Normalized (inputs, targets) in chronological order; rows lacking a target are skipped."""
    x = normalize_apply(stats.subset(spec.features), feature_matrix(spec, series))
    y = normalize_apply(stats.subset([spec.target]), series.column(spec.target)[:, None])[:, 0]
    if spec.model_family is ModelFamily.LSTM:
        windows, targets = make_windows(x, lookback)
        keep = ~np.isnan(targets)
        return windows[keep], targets[keep]
    keep = ~np.isnan(y)
    return x[keep], y[keep]


def fingerprint(series: TelemetrySeries, n_train: int) -> str:
    """Provenance summary: counts, date range and a digest of the training rows."""
    digest = hashlib.sha256(np.ascontiguousarray(series.values[:n_train], dtype="<f8").tobytes()).hexdigest()
    ts = series.timestamps
    return (
        f"node={series.node_id} rows={len(series)} train_rows={n_train} interval={series.interval}s "
        f"from={format_timestamp(ts[0])} to={format_timestamp(ts[-1])} train_sha256={digest}"
    )


def train_question(
    spec: QuestionSpec,
    series: TelemetrySeries,
    config: TrainConfig | None = None,
    *,
    split_spec: SplitSpec = SplitSpec(),
    init: ModelBundle | None = None,
    publisher: str = "anonymous",
    created_at: str | None = None,
) -> TrainOutcome:
    """Fit the model answering ``spec`` on the first 70% of ``series`` and score
    it on the remainder.

    ``init`` starts from an existing bundle's parameters and normalization,
    which is how members of a joint-training round stay mergeable.
    ``created_at`` defaults to ``SOURCE_DATE_EPOCH`` if set, else the last
    timestamp of the series, so identical inputs produce identical bundles.
    """
    config = config or DEFAULT_CONFIGS[spec.model_family]
    if not series.has_column(spec.target):
        raise InvalidInput(f"series has no {spec.target!r} values to learn from")
    train_part, test_part = split(series, split_spec)
    n_train = len(train_part)

    if init is not None:
        if init.spec.id is not spec.id or init.spec.target != spec.target:
            raise InvalidInput("initial bundle answers a different question")
        stats, params = init.norm_stats, init.params.copy()
    else:
        stats = training_stats(spec, train_part)
        if spec.model_family is ModelFamily.LSTM:
            params = init_lstm(len(spec.features), LSTM_HIDDEN, LSTM_LOOKBACK, seed=config.seed)
        else:
            params = init_mlp((len(spec.features), *MLP_HIDDEN, 1), seed=config.seed)
    lookback = params.lookback if isinstance(params, LstmParams) else None

    x, y = training_data(spec, stats, train_part, lookback)
    if len(y) == 0:
        raise EmptyDataset("no training samples after windowing")
    params, history = train(params, x, y, config)

    # forecasting windows for the test rows may reach back into the training prefix
    if lookback is not None:
        if n_train < lookback:
            raise EmptyDataset(f"training prefix ({n_train} rows) shorter than lookback {lookback}")
        context = series.slice(n_train - lookback, len(series))
        yhat = predict_series(spec, params, stats, context)[:-1]
    else:
        yhat = predict_series(spec, params, stats, test_part)
    truth = test_part.column(spec.target)
    known = ~np.isnan(truth)
    if not known.any():
        raise EmptyDataset("test suffix has no target values")
    metrics = evaluate(truth[known], yhat[known])
    tstats = stats.subset([spec.target])
    metrics_norm = evaluate(
        normalize_apply(tstats, truth[known][:, None])[:, 0], normalize_apply(tstats, yhat[known][:, None])[:, 0]
    )
    baseline = None
    if lookback is not None:
        previous = series.column(spec.target)[n_train - 1 : -1]
        ok = known & ~np.isnan(previous)
        baseline = evaluate(truth[ok], previous[ok])

    if created_at is None:
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        created_at = format_timestamp(int(epoch) if epoch else int(series.timestamps[-1]))
    manifest = make_manifest(
        spec,
        params,
        created_at=created_at,
        publisher=publisher,
        train_fingerprint=fingerprint(series, n_train),
        interval=series.interval,
    )
    return TrainOutcome(
        bundle=ModelBundle(manifest, stats, params),
        history=history,
        test_metrics=metrics,
        test_metrics_normalized=metrics_norm,
        test_r2=r2(truth[known], yhat[known]),
        baseline_metrics=baseline,
        n_train=n_train,
        n_test=len(test_part),
    )
