"""Mini-batch gradient descent on MSE for either model family."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergedToNonFinite, EmptyDataset
from .lstm import LstmParams, lstm_loss_grad, lstm_predict
from .mlp import MlpParams, mlp_loss_grad, mlp_predict

Params = MlpParams | LstmParams


@dataclass(frozen=True)
class PlainGD:
    pass


@dataclass(frozen=True)
class MomentumGD:
    momentum: float = 0.9


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0
    optimizer: PlainGD | MomentumGD = field(default_factory=MomentumGD)
    gradient_clip: float | None = 5.0
    early_stop_patience: int | None = None
    validation_fraction: float = 0.15

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.gradient_clip is not None and self.gradient_clip <= 0:
            raise ValueError("gradient_clip must be positive")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


def loss_grad(params: Params, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    if isinstance(params, LstmParams):
        return lstm_loss_grad(params, x, y)
    return mlp_loss_grad(params, x, y)


def predict(params: Params, x: np.ndarray) -> np.ndarray:
    if isinstance(params, LstmParams):
        return lstm_predict(params, x)
    return mlp_predict(params, x)


def batch_loss(params: Params, x: np.ndarray, y: np.ndarray, chunk: int = 4096) -> float:
    total = 0.0
    for lo in range(0, len(y), chunk):
        err = predict(params, x[lo : lo + chunk]) - y[lo : lo + chunk]
        total += float(np.sum(err**2))
    return total / len(y)


def train(params: Params, inputs: np.ndarray, targets: np.ndarray, config: TrainConfig = TrainConfig()):
    """Fit ``params`` to (inputs, targets); returns ``(new_params, history)``.

    ``history`` holds the mean mini-batch training loss of each epoch run.
    With ``early_stop_patience`` set, the trailing ``validation_fraction`` of
    the dataset (in the given order) is held out, and the parameters with the
    best validation loss are returned once it stops improving.
    The input ``params`` object is never mutated.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if len(y) == 0 or x.shape[0] != len(y):
        raise EmptyDataset("dataset is empty or inputs/targets lengths differ")
    current = params.copy()
    history: list[float] = []
    if config.epochs == 0:
        return current, history

    x_val = y_val = None
    if config.early_stop_patience is not None:
        n_val = int(len(y) * config.validation_fraction)
        if n_val >= 1 and len(y) - n_val >= 1:
            x, x_val = x[:-n_val], x[-n_val:]
            y, y_val = y[:-n_val], y[-n_val:]

    rng = np.random.default_rng(config.seed)
    tensors = current.tensors()
    velocity = [np.zeros_like(t) for t in tensors]
    mu = config.optimizer.momentum if isinstance(config.optimizer, MomentumGD) else 0.0
    lr = config.learning_rate
    best_val, best_tensors, stale = np.inf, None, 0

    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        losses = []
        for lo in range(0, len(y), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            loss, grads = loss_grad(current, x[idx], y[idx])
            losses.append(loss)
            if config.gradient_clip is not None:
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
                if norm > config.gradient_clip:
                    scale = config.gradient_clip / norm
                    grads = [g * scale for g in grads]
            for t, v, g in zip(tensors, velocity, grads):
                v *= mu
                v += g
                t -= lr * v
            if isinstance(current, LstmParams):
                # head bias lives outside the tensor list as a float
                current.head_b = float(tensors[-1][0])
            if not all(np.isfinite(t).all() for t in tensors):
                raise DivergedToNonFinite("a parameter became NaN or inf during training")
        history.append(float(np.mean(losses)))

        if y_val is not None:
            val = batch_loss(current, x_val, y_val)
            if val < best_val:
                best_val, best_tensors, stale = val, [t.copy() for t in tensors], 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break

    if best_tensors is not None:
        return current.with_tensors(best_tensors), history
    return current.with_tensors([t.copy() for t in tensors]), history


def grad_check(params: Params, inputs: np.ndarray, targets: np.ndarray, step: float = 1e-5) -> float:
    """Largest relative disagreement between analytic and central-difference
    gradients of the batch MSE, over every scalar parameter.

    Relative error is ``|a - f| / max(|a|, |f|, 1e-8)``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).ravel()
    _, analytic = loss_grad(params, x, y)
    base = [t.copy() for t in params.tensors()]
    worst = 0.0
    for k, t in enumerate(base):
        flat = t.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up, _ = loss_grad(params.with_tensors(base), x, y)
            flat[j] = orig - step
            down, _ = loss_grad(params.with_tensors(base), x, y)
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            a = float(analytic[k].reshape(-1)[j])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
