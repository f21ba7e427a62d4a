"""Min-max scaling fitted on training rows only."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, EmptyInput


@dataclass(frozen=True)
class NormStats:
    columns: tuple[str, ...]
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if self.min.shape != self.max.shape or self.min.shape != (len(self.columns),):
            raise DimensionMismatch("min/max/columns lengths differ")
        if np.any(self.min > self.max):
            raise ValueError("min exceeds max")

    @property
    def span(self) -> np.ndarray:
        return self.max - self.min

    def subset(self, columns: Sequence[str]) -> NormStats:
        idx = [self.columns.index(c) for c in columns]
        return NormStats(tuple(columns), self.min[idx].copy(), self.max[idx].copy())

    def __eq__(self, other):
        if not isinstance(other, NormStats):
            return NotImplemented
        return (
            self.columns == other.columns
            and np.array_equal(self.min, other.min)
            and np.array_equal(self.max, other.max)
        )


def normalize_fit(train: np.ndarray, columns: Sequence[str] | None = None) -> NormStats:
    x = np.asarray(train, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise EmptyInput("cannot fit normalization on zero rows")
    if columns is None:
        columns = [f"c{j}" for j in range(x.shape[1])]
    if len(columns) != x.shape[1]:
        raise DimensionMismatch(f"{len(columns)} names for {x.shape[1]} columns")
    return NormStats(tuple(columns), x.min(axis=0), x.max(axis=0))


def _check(stats: NormStats, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != len(stats.columns):
        raise DimensionMismatch(f"expected {len(stats.columns)} columns, got {x.shape[-1]}")
    return x


def normalize_apply(stats: NormStats, x) -> np.ndarray:
    """Map each column to ``(x - min) / (max - min)``; constant columns map to 0.

    Values outside the training range are not clamped.
    """
    x = _check(stats, x)
    span = stats.span
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - stats.min) / safe, 0.0)


def denormalize(stats: NormStats, z) -> np.ndarray:
    z = _check(stats, z)
    return z * stats.span + stats.min
