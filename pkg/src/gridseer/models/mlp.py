"""Feed-forward regressor: tanh hidden layers, identity scalar output."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, NonFiniteInput


@dataclass
class MlpParams:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]  # layer l: (layer_sizes[l+1], layer_sizes[l])
    biases: list[np.ndarray]

    family = "Mlp"

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        sizes = self.layer_sizes
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError("layer_sizes needs at least two positive entries")
        if sizes[-1] != 1:
            raise ValueError("output layer must have size 1")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DimensionMismatch("one weight matrix and bias vector per layer expected")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise DimensionMismatch(f"layer {l}: got W{w.shape}, b{b.shape}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def tensor_names(self) -> list[str]:
        names = []
        for l in range(len(self.weights)):
            names += [f"W{l}", f"b{l}"]
        return names

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> MlpParams:
        tensors = list(tensors)
        return MlpParams(self.layer_sizes, tensors[0::2], tensors[1::2])

    def architecture(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes)}

    def copy(self) -> MlpParams:
        return self.with_tensors([t.copy() for t in self.tensors()])


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_mlp(layer_sizes: Sequence[int], seed: int = 0) -> MlpParams:
    rng = np.random.default_rng(seed)
    sizes = tuple(layer_sizes)
    weights = [glorot(rng, sizes[l + 1], sizes[l]) for l in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[l + 1]) for l in range(len(sizes) - 1)]
    return MlpParams(sizes, weights, biases)


def _activations(params: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if l == last else np.tanh(z))
    return acts


def mlp_predict(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Batched forward pass; ``x`` is (n, input_dim), returns (n,)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise DimensionMismatch(f"expected (n, {params.input_dim}) inputs, got {x.shape}")
    if not np.isfinite(x).all():
        raise NonFiniteInput("inputs contain NaN or inf")
    return _activations(params, x)[-1][:, 0]


def mlp_forward(params: MlpParams, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("mlp_forward takes a single input vector")
    return float(mlp_predict(params, x[None, :])[0])


def mlp_loss_grad(params: MlpParams, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean squared error over the batch and its gradient, ordered as ``tensors()``."""
    acts = _activations(params, x)
    n = x.shape[0]
    err = acts[-1][:, 0] - y
    loss = float(np.mean(err**2))
    delta = (2.0 / n) * err[:, None]
    grads: list[np.ndarray] = []
    for l in range(len(params.weights) - 1, -1, -1):
        gw = delta.T @ acts[l]
        gb = delta.sum(axis=0)
        grads = [gw, gb] + grads
        if l > 0:
            delta = (delta @ params.weights[l]) * (1.0 - acts[l] ** 2)
    return loss, grads
