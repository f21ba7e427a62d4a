"""Single-layer LSTM forecaster with a linear read-out of the last hidden state.

Gate equations, per step t with zero initial state::

    i = sigmoid(W_i x + U_i h + b_i)     f = sigmoid(W_f x + U_f h + b_f)
    o = sigmoid(W_o x + U_o h + b_o)     g = tanh(W_g x + U_g h + b_g)
    c = f * c_prev + i * g               h = o * tanh(c)

The prediction is ``head_w @ h_T + head_b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import BadWindowLength, DimensionMismatch, NonFiniteInput
from .mlp import glorot

GATES = ("i", "f", "o", "g")


@dataclass
class LstmParams:
    input_dim: int
    hidden_dim: int
    lookback: int
    w: dict[str, np.ndarray]  # gate -> (hidden, input)
    u: dict[str, np.ndarray]  # gate -> (hidden, hidden)
    b: dict[str, np.ndarray]  # gate -> (hidden,)
    head_w: np.ndarray  # (1, hidden)
    head_b: float

    family = "Lstm"

    def __post_init__(self):
        d, h = int(self.input_dim), int(self.hidden_dim)
        self.input_dim, self.hidden_dim, self.lookback = d, h, int(self.lookback)
        self.head_b = float(self.head_b)
        if d < 1 or h < 1 or self.lookback < 1:
            raise ValueError("input_dim, hidden_dim and lookback must be >= 1")
        for g in GATES:
            if self.w[g].shape != (h, d) or self.u[g].shape != (h, h) or self.b[g].shape != (h,):
                raise DimensionMismatch(f"gate {g} has inconsistent shapes")
        if self.head_w.shape != (1, h):
            raise DimensionMismatch(f"head weight must be (1, {h})")

    def tensors(self) -> list[np.ndarray]:
        return (
            [self.w[g] for g in GATES]
            + [self.u[g] for g in GATES]
            + [self.b[g] for g in GATES]
            + [self.head_w, np.array([self.head_b])]
        )

    def tensor_names(self) -> list[str]:
        return [f"W_{g}" for g in GATES] + [f"U_{g}" for g in GATES] + [f"b_{g}" for g in GATES] + ["head_w", "head_b"]

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> LstmParams:
        return LstmParams.from_tensors(self.input_dim, self.hidden_dim, self.lookback, tensors)

    @classmethod
    def from_tensors(cls, input_dim: int, hidden_dim: int, lookback: int, tensors: Sequence[np.ndarray]) -> LstmParams:
        t = list(tensors)
        if len(t) != 14:
            raise DimensionMismatch(f"an LSTM has 14 tensors, got {len(t)}")
        return cls(
            input_dim,
            hidden_dim,
            lookback,
            dict(zip(GATES, t[0:4])),
            dict(zip(GATES, t[4:8])),
            dict(zip(GATES, t[8:12])),
            t[12],
            float(np.asarray(t[13]).reshape(-1)[0]),
        )

    def architecture(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_dim": self.hidden_dim, "lookback": self.lookback}

    def copy(self) -> LstmParams:
        return self.with_tensors([t.copy() for t in self.tensors()])

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gate matrices stacked in i, f, o, g order: (4H, D), (4H, H), (4H,)."""
        return (
            np.concatenate([self.w[g] for g in GATES]),
            np.concatenate([self.u[g] for g in GATES]),
            np.concatenate([self.b[g] for g in GATES]),
        )


def init_lstm(input_dim: int, hidden_dim: int = 32, lookback: int = 48, seed: int = 0) -> LstmParams:
    rng = np.random.default_rng(seed)
    w = {g: glorot(rng, hidden_dim, input_dim) for g in GATES}
    u = {g: glorot(rng, hidden_dim, hidden_dim) for g in GATES}
    b = {g: np.zeros(hidden_dim) for g in GATES}
    b["f"] = np.ones(hidden_dim)
    head_w = glorot(rng, 1, hidden_dim)
    return LstmParams(input_dim, hidden_dim, lookback, w, u, b, head_w, 0.0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check_windows(params: LstmParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionMismatch(f"expected (n, lookback, input_dim) windows, got {x.shape}")
    if x.shape[1] != params.lookback:
        raise BadWindowLength(f"window length {x.shape[1]} != lookback {params.lookback}")
    if x.shape[2] != params.input_dim:
        raise DimensionMismatch(f"window vectors have {x.shape[2]} entries, expected {params.input_dim}")
    if not np.isfinite(x).all():
        raise NonFiniteInput("windows contain NaN or inf")
    return x


def _forward(params: LstmParams, x: np.ndarray, keep: bool):
    n, steps, _ = x.shape
    hd = params.hidden_dim
    w, u, b = params.stacked()
    h = np.zeros((n, hd))
    c = np.zeros((n, hd))
    # input projections for all steps at once
    xw = x @ w.T + b
    cache = []
    for t in range(steps):
        z = xw[:, t] + h @ u.T
        i = _sigmoid(z[:, :hd])
        f = _sigmoid(z[:, hd : 2 * hd])
        o = _sigmoid(z[:, 2 * hd : 3 * hd])
        g = np.tanh(z[:, 3 * hd :])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        if keep:
            cache.append((i, f, o, g, c_prev, h_prev, tc))
    y = h @ params.head_w[0] + params.head_b
    return y, h, cache


def lstm_predict(params: LstmParams, windows: np.ndarray) -> np.ndarray:
    """Batched forecasts for windows shaped (n, lookback, input_dim)."""
    x = _check_windows(params, windows)
    return _forward(params, x, keep=False)[0]


def lstm_forward(params: LstmParams, window) -> float:
    x = np.asarray(window, dtype=np.float64)
    if x.ndim == 1:
        if params.input_dim != 1 and x.size:
            raise DimensionMismatch("1-D window only valid for univariate models")
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise BadWindowLength("window must hold lookback input vectors")
    return float(lstm_predict(params, x[None])[0])


def lstm_loss_grad(params: LstmParams, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Batch MSE and its gradient by backpropagation through time."""
    n, steps, _ = x.shape
    hd = params.hidden_dim
    pred, h_last, cache = _forward(params, x, keep=True)
    err = pred - y
    loss = float(np.mean(err**2))
    dy = (2.0 / n) * err

    _, u, _ = params.stacked()
    g_head_w = (dy @ h_last)[None, :]
    g_head_b = np.array([dy.sum()])
    gw = np.zeros((4 * hd, params.input_dim))
    gu = np.zeros((4 * hd, hd))
    gb = np.zeros(4 * hd)
    dh = dy[:, None] * params.head_w[0]
    dc = np.zeros((n, hd))
    dz = np.empty((n, 4 * hd))
    for t in range(steps - 1, -1, -1):
        i, f, o, g, c_prev, h_prev, tc = cache[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc**2)
        dz[:, :hd] = dc * g * i * (1.0 - i)
        dz[:, hd : 2 * hd] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * hd : 3 * hd] = do * o * (1.0 - o)
        dz[:, 3 * hd :] = dc * i * (1.0 - g**2)
        gw += dz.T @ x[:, t]
        gu += dz.T @ h_prev
        gb += dz.sum(axis=0)
        dh = dz @ u
        dc = dc * f

    split = lambda a: [a[k * hd : (k + 1) * hd] for k in range(4)]  # noqa: E731
    return loss, split(gw) + split(gu) + split(gb) + [g_head_w, g_head_b]


def make_windows(matrix: np.ndarray, lookback: int, with_targets: bool = True):
    """Sliding windows over rows of ``matrix`` (n, d).

    With targets: windows ``[k, k+lookback)`` paired with row ``k+lookback``
    column 0 (n - lookback pairs). Without: every full window, n - lookback + 1.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    n = m.shape[0]
    count = n - lookback if with_targets else n - lookback + 1
    if count <= 0:
        empty = np.zeros((0, lookback, m.shape[1]))
        return (empty, np.zeros(0)) if with_targets else empty
    view = np.lib.stride_tricks.sliding_window_view(m, lookback, axis=0)  # (n-L+1, d, L)
    windows = np.ascontiguousarray(view[:count].transpose(0, 2, 1))
    if with_targets:
        return windows, m[lookback:, 0].copy()
    return windows
