"""Point-forecast error metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyInput, LengthMismatch


@dataclass(frozen=True)
class Metrics:
    mae: float
    mse: float
    n: int

    def as_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "n": self.n}


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise LengthMismatch(f"lengths differ: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise EmptyInput("metrics need at least one value")
    return y, yhat


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def r2(y, yhat) -> float:
    """Coefficient of determination. A constant target scores 1 only if matched exactly."""
    y, yhat = _pair(y, yhat)
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def evaluate(y, yhat) -> Metrics:
    y, yhat = _pair(y, yhat)
    return Metrics(mae=mae(y, yhat), mse=mse(y, yhat), n=int(y.size))
