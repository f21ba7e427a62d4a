import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gridseer.errors import BadWindowLength, DimensionMismatch, EmptyDataset, EmptyInput, LengthMismatch, NonFiniteInput
from gridseer.models import (
    LstmParams,
    MlpParams,
    NormStats,
    TrainConfig,
    denormalize,
    evaluate,
    grad_check,
    init_lstm,
    init_mlp,
    lstm_forward,
    lstm_predict,
    mae,
    make_windows,
    mlp_forward,
    mlp_predict,
    mse,
    normalize_apply,
    normalize_fit,
    train,
)
from oracles import mlp_by_hand, naive_mae, naive_mse, ols_fit_predict, sigmoid


def zero_lstm(d=1, h=3, lookback=4, head_b=0.0):
    p = init_lstm(d, h, lookback)
    return p.with_tensors([np.zeros_like(t) for t in p.tensors()[:-1]] + [np.array([head_b])])


# ---------------------------------------------------------------------------
# normalization


def test_normalize_fit_range():
    stats = normalize_fit(np.array([[0.0], [348.0], [100.0]]), ["power_w"])
    assert stats.min.tolist() == [0.0] and stats.max.tolist() == [348.0]
    assert normalize_apply(stats, [174.0]).tolist() == [0.5]


def test_normalize_constant_column():
    stats = normalize_fit(np.array([[5.0], [5.0], [5.0]]))
    assert (stats.min[0], stats.max[0]) == (5.0, 5.0)
    assert normalize_apply(stats, [5.0]).tolist() == [0.0]


def test_normalize_columns_independent():
    stats = normalize_fit(np.array([[0.0, 10.0], [2.0, 20.0]]), ["a", "b"])
    assert stats.min.tolist() == [0.0, 10.0] and stats.max.tolist() == [2.0, 20.0]
    assert stats.subset(["b"]).min.tolist() == [10.0]


def test_normalize_dimension_mismatch():
    stats = normalize_fit(np.zeros((2, 2)))
    with pytest.raises(DimensionMismatch):
        normalize_apply(stats, [1.0, 2.0, 3.0])


def test_normalize_out_of_range_not_clamped():
    stats = normalize_fit(np.array([[0.0], [10.0]]))
    assert normalize_apply(stats, [20.0]).tolist() == [2.0]


@given(arrays(np.float64, (20, 3), elements=st.floats(-1e6, 1e6)))
def test_denormalize_round_trip(m):
    stats = normalize_fit(m)
    back = denormalize(stats, normalize_apply(stats, m))
    varying = stats.span > 0
    np.testing.assert_allclose(back[:, varying], m[:, varying], rtol=1e-12, atol=1e-9)


# ---------------------------------------------------------------------------
# MLP forward


def test_mlp_zero_params_outputs_zero():
    p = init_mlp((3, 5, 1))
    z = p.with_tensors([np.zeros_like(t) for t in p.tensors()])
    assert mlp_forward(z, [1.0, -2.0, 3.0]) == 0.0


def test_mlp_single_linear_layer():
    p = MlpParams((2, 1), [np.array([[1.0, 1.0]])], [np.array([0.0])])
    assert mlp_forward(p, [0.3, 0.2]) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_mlp_matches_hand_evaluation(seed):
    p = init_mlp((3, 6, 4, 1), seed=seed)
    p = p.with_tensors([t + 0.1 * np.random.default_rng(seed).normal(size=t.shape) for t in p.tensors()])
    xs = np.random.default_rng(seed + 100).normal(size=(10, 3))
    ws = [w.tolist() for w in p.weights]
    bs = [b.tolist() for b in p.biases]
    expected = [mlp_by_hand(ws, bs, x) for x in xs.tolist()]
    np.testing.assert_allclose(mlp_predict(p, xs), expected, rtol=1e-12, atol=1e-14)


def test_mlp_errors():
    p = init_mlp((2, 3, 1))
    with pytest.raises(DimensionMismatch):
        mlp_forward(p, [1.0, 2.0, 3.0])
    with pytest.raises(NonFiniteInput):
        mlp_forward(p, [1.0, float("nan")])
    with pytest.raises(ValueError):
        init_mlp((2,))


# ---------------------------------------------------------------------------
# LSTM forward


def test_lstm_zero_params_give_head_bias():
    p = zero_lstm(head_b=0.0)
    assert lstm_forward(p, np.ones(4)) == 0.0
    windows = np.random.default_rng(0).normal(size=(7, 4, 1))
    assert lstm_predict(zero_lstm(head_b=-1.25), windows).tolist() == [-1.25] * 7


def scalar_lstm(wi, wf, wo, wg, ui, uf, uo, ug, bi, bf, bo, bg, hw, hb, lookback):
    a = lambda v: np.array([[v]])  # noqa: E731
    return LstmParams(
        1, 1, lookback,
        {"i": a(wi), "f": a(wf), "o": a(wo), "g": a(wg)},
        {"i": a(ui), "f": a(uf), "o": a(uo), "g": a(ug)},
        {"i": np.array([bi]), "f": np.array([bf]), "o": np.array([bo]), "g": np.array([bg])},
        a(hw), hb,
    )


def test_lstm_single_step_by_hand():
    p = scalar_lstm(0.5, -0.3, 0.7, 1.2, 0, 0, 0, 0, 0.1, 1.0, -0.2, 0.05, 2.0, 0.3, lookback=1)
    x = 0.8
    i = sigmoid(0.5 * x + 0.1)
    o = sigmoid(0.7 * x - 0.2)
    g = math.tanh(1.2 * x + 0.05)
    c = i * g  # previous cell is zero so the forget gate drops out
    h = o * math.tanh(c)
    assert lstm_forward(p, [x]) == pytest.approx(2.0 * h + 0.3, rel=1e-14)


def test_lstm_two_steps_by_hand():
    vals = dict(wi=0.4, wf=-0.6, wo=0.9, wg=1.1, ui=0.3, uf=0.2, uo=-0.5, ug=0.7,
                bi=0.0, bf=1.0, bo=0.1, bg=-0.1, hw=-1.5, hb=0.2)
    p = scalar_lstm(**vals, lookback=2)
    h = c = 0.0
    for x in (0.25, -0.6):
        i = sigmoid(vals["wi"] * x + vals["ui"] * h + vals["bi"])
        f = sigmoid(vals["wf"] * x + vals["uf"] * h + vals["bf"])
        o = sigmoid(vals["wo"] * x + vals["uo"] * h + vals["bo"])
        g = math.tanh(vals["wg"] * x + vals["ug"] * h + vals["bg"])
        c = f * c + i * g
        h = o * math.tanh(c)
    assert lstm_forward(p, [[0.25], [-0.6]]) == pytest.approx(vals["hw"] * h + vals["hb"], rel=1e-13)


def test_lstm_window_errors():
    p = init_lstm(2, 3, 5)
    with pytest.raises(BadWindowLength):
        lstm_forward(p, np.zeros((0, 2)))
    with pytest.raises(BadWindowLength):
        lstm_forward(p, np.zeros((4, 2)))
    with pytest.raises(DimensionMismatch):
        lstm_forward(p, np.zeros((5, 3)))


def test_make_windows_counts():
    m = np.arange(10.0)[:, None]
    w, y = make_windows(m, 3)
    assert w.shape == (7, 3, 1) and y.tolist() == list(range(3, 10))
    assert w[0, :, 0].tolist() == [0, 1, 2]
    assert make_windows(m, 3, with_targets=False).shape == (8, 3, 1)


def test_lstm_batch_matches_single():
    p = init_lstm(2, 4, 6, seed=2)
    windows = np.random.default_rng(1).normal(size=(5, 6, 2))
    batch = lstm_predict(p, windows)
    np.testing.assert_allclose(batch, [lstm_forward(p, w) for w in windows], rtol=1e-12)


# ---------------------------------------------------------------------------
# gradient checks


@pytest.mark.parametrize("seed", range(10))
def test_grad_check_mlp(seed):
    rng = np.random.default_rng(seed)
    p = init_mlp((3, 8, 6, 1), seed=seed)  # 87 parameters
    assert grad_check(p, rng.normal(size=(12, 3)), rng.normal(size=12)) < 1e-5


@pytest.mark.parametrize("seed", range(10))
def test_grad_check_lstm(seed):
    rng = np.random.default_rng(seed)
    p = init_lstm(2, 5, 6, seed=seed)  # 4*(5*2+5*5+5)+5+1 = 166 parameters
    assert sum(t.size for t in p.tensors()) <= 200
    assert grad_check(p, rng.normal(size=(6, 6, 2)), rng.normal(size=6)) < 1e-4


# ---------------------------------------------------------------------------
# metrics


def test_metrics_examples():
    assert (mae([1, 2], [1, 2]), mse([1, 2], [1, 2])) == (0.0, 0.0)
    assert (mae([0, 4], [2, 2]), mse([0, 4], [2, 2])) == (2.0, 4.0)
    m = evaluate([0, 4], [2, 2])
    assert m.as_dict() == {"mae": 2.0, "mse": 4.0, "n": 2}


def test_metrics_errors():
    with pytest.raises(LengthMismatch):
        mae([1, 2], [1])
    with pytest.raises(EmptyInput):
        mse([], [])


def test_metrics_match_naive_loops(rng):
    y, yhat = rng.normal(size=1000) * 30, rng.normal(size=1000) * 30
    assert mae(y, yhat) == pytest.approx(naive_mae(y.tolist(), yhat.tolist()), rel=1e-12)
    assert mse(y, yhat) == pytest.approx(naive_mse(y.tolist(), yhat.tolist()), rel=1e-12)


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=100))
def test_mae_squared_bounded_by_mse(pairs):
    y, yhat = zip(*pairs)
    assert mae(y, yhat) ** 2 <= mse(y, yhat) * (1 + 1e-12) + 1e-300


# ---------------------------------------------------------------------------
# training


def linear_data(n=600, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, size=(n, 2))
    return x, 2 * x[:, 0] + 3 * x[:, 1]


def test_train_epochs_zero_is_identity():
    p = init_mlp((2, 4, 1), seed=1)
    x, y = linear_data(50)
    out, history = train(p, x, y, TrainConfig(epochs=0))
    assert history == []
    assert all(np.array_equal(a, b) for a, b in zip(out.tensors(), p.tensors()))


def test_train_zero_learning_rate_is_identity():
    p = init_lstm(1, 3, 4, seed=1)
    windows, y = make_windows(np.sin(np.arange(60.0))[:, None], 4)
    out, history = train(p, windows, y, TrainConfig(epochs=10, learning_rate=0.0))
    assert len(history) == 10
    assert all(np.array_equal(a, b) for a, b in zip(out.tensors(), p.tensors()))


def test_train_does_not_mutate_input():
    p = init_mlp((2, 4, 1), seed=1)
    before = [t.copy() for t in p.tensors()]
    train(p, *linear_data(100), TrainConfig(epochs=3))
    assert all(np.array_equal(a, b) for a, b in zip(before, p.tensors()))


def test_train_empty_dataset():
    with pytest.raises(EmptyDataset):
        train(init_mlp((2, 1)), np.zeros((0, 2)), np.zeros(0), TrainConfig(epochs=1))


@pytest.mark.parametrize("make", [lambda: init_mlp((2, 6, 1), seed=4), lambda: init_lstm(2, 3, 5, seed=4)])
def test_train_deterministic(make):
    rng = np.random.default_rng(9)
    if isinstance(make(), LstmParams):
        x, y = rng.normal(size=(80, 5, 2)), rng.normal(size=80)
    else:
        x, y = rng.normal(size=(80, 2)), rng.normal(size=80)
    cfg = TrainConfig(epochs=4, batch_size=16, seed=5, early_stop_patience=2)
    a, ha = train(make(), x, y, cfg)
    b, hb = train(make(), x, y, cfg)
    assert ha == hb
    assert all(np.array_equal(s, t) for s, t in zip(a.tensors(), b.tensors()))


def test_mlp_recovers_noiseless_linear_map():
    x, y = linear_data(1000)
    cut = 700
    p, history = train(init_mlp((2, 16, 1), seed=0), x[:cut], y[:cut] / 5, TrainConfig(epochs=150, learning_rate=0.02))
    assert history[-1] <= history[0]
    fit = mse(y[cut:], 5 * mlp_predict(p, x[cut:]))
    ols = mse(y[cut:], ols_fit_predict(x[:cut].tolist(), y[:cut].tolist(), x[cut:].tolist()))
    # least squares is exact here, so the bound is effectively an absolute one
    assert fit <= max(1.5 * ols, 1e-3)


def test_norm_stats_equality():
    a = NormStats(("x",), np.array([0.0]), np.array([1.0]))
    b = NormStats(("x",), np.array([0.0]), np.array([1.0]))
    c = NormStats(("y",), np.array([0.0]), np.array([1.0]))
    assert a == b and a != c
