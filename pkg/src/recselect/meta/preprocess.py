"""Feature preprocessing fitted on training rows only.

Standardization uses the population standard deviation; columns whose spread
is indistinguishable from floating-point noise keep scale 1.0 so constant
features map to (numerically) zero instead of amplified rounding error.
One-hot encoding maps each categorical column over its sorted training
vocabulary; unseen categories encode as an all-zero block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    scale: np.ndarray


def standardize_fit(x: np.ndarray) -> ScalerParams:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("standardize_fit expects a non-empty 2-D array")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    tol = 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(std > tol, std, 1.0)
    return ScalerParams(mean=mean, scale=scale)


def standardize_apply(params: ScalerParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - params.mean) / params.scale


@dataclass(frozen=True)
class OneHotMap:
    """Sorted category vocabulary per categorical column."""

    categories: tuple[tuple[str, ...], ...]

    def output_names(self, column_names: Sequence[str]) -> list[str]:
        names = []
        for col, values in zip(column_names, self.categories):
            names += [f"{col}={v}" for v in values]
        return names

    @property
    def width(self) -> int:
        return sum(len(values) for values in self.categories)


def one_hot_fit(rows: Sequence[Sequence[str]]) -> OneHotMap:
    """Learn vocabularies from training rows (one tuple of strings per row)."""
    if not rows:
        return OneHotMap(categories=())
    n_cols = len(rows[0])
    if any(len(r) != n_cols for r in rows):
        raise ValueError("categorical rows have inconsistent arity")
    categories = tuple(
        tuple(sorted({str(r[c]) for r in rows})) for c in range(n_cols)
    )
    return OneHotMap(categories=categories)


def one_hot_apply(mapping: OneHotMap, rows: Sequence[Sequence[str]]) -> np.ndarray:
    out = np.zeros((len(rows), mapping.width))
    for i, row in enumerate(rows):
        offset = 0
        for value, values in zip(row, mapping.categories):
            try:
                out[i, offset + values.index(str(value))] = 1.0
            except ValueError:
                pass  # unseen category: leave the block at zero
            offset += len(values)
    return out
