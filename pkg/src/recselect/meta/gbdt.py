"""Gradient-boosted regression trees with exact greedy splitting.

Squared-error boosting: the model starts from the target mean and each stage
fits a depth-limited CART regression tree to the current residuals, added
with a constant learning rate. Split search is exact (no histogram binning):
every feature's sorted order is scanned and the variance-reduction gain of
every admissible threshold is computed; the best (gain, then lowest split
position, then lowest feature index) wins. Feature importance is the total
split gain accumulated per feature, normalized to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GBDTParams:
    num_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1
    subsample: float = 1.0
    seed: int = 0

    def validate(self) -> "GBDTParams":
        if self.num_trees < 0:
            raise ValueError("num_trees must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")
        return self

    @classmethod
    def from_dict(cls, raw: dict) -> "GBDTParams":
        return cls(**raw).validate()


class RegressionTree:
    """CART regression tree stored as parallel node arrays."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "gain")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.gain: list[float] = []

    def _new_node(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def fit(self, x: np.ndarray, y: np.ndarray, max_depth: int, min_samples_leaf: int) -> "RegressionTree":
        self._build(x, y, np.arange(y.shape[0]), 0, max_depth, min_samples_leaf)
        return self

    def _build(self, x, y, idx, depth, max_depth, min_samples_leaf) -> int:
        y_node = y[idx]
        n = idx.shape[0]
        mean = float(y_node.mean())
        node = self._new_node(mean)
        if depth >= max_depth or n < 2 * min_samples_leaf:
            return node
        split = _best_split(x[idx], y_node, min_samples_leaf)
        if split is None:
            return node
        feature, threshold, gain = split
        go_left = x[idx, feature] <= threshold
        if not go_left.any() or go_left.all():
            return node  # midpoint rounded onto a sample value; keep the leaf
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.gain[node] = gain
        self.left[node] = self._build(x, y, idx[go_left], depth + 1, max_depth, min_samples_leaf)
        self.right[node] = self._build(x, y, idx[~go_left], depth + 1, max_depth, min_samples_leaf)
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape[0])
        self._predict_into(0, x, np.arange(x.shape[0]), out)
        return out

    def _predict_into(self, node: int, x, idx, out) -> None:
        if self.feature[node] < 0:
            out[idx] = self.value[node]
            return
        go_left = x[idx, self.feature[node]] <= self.threshold[node]
        self._predict_into(self.left[node], x, idx[go_left], out)
        self._predict_into(self.right[node], x, idx[~go_left], out)

    def accumulate_gains(self, totals: np.ndarray) -> None:
        for node, feature in enumerate(self.feature):
            if feature >= 0:
                totals[feature] += self.gain[node]


def _best_split(x_node: np.ndarray, y_node: np.ndarray, min_samples_leaf: int):
    """Exact greedy search over all features at once.

    Returns (feature, threshold, gain) or None when no admissible split has
    strictly positive gain. Split positions s place the first s sorted rows
    on the left; position order breaks gain ties before feature order does
    (argmax over the s-major grid respects both).
    """
    n, n_features = x_node.shape
    if n_features == 0:
        return None
    order = np.argsort(x_node, axis=0, kind="stable")
    x_sorted = np.take_along_axis(x_node, order, axis=0)
    y_sorted = y_node[order]

    cum = np.cumsum(y_sorted, axis=0)
    cum_sq = np.cumsum(y_sorted * y_sorted, axis=0)
    total, total_sq = cum[-1], cum_sq[-1]
    sse_node = float(total_sq[0] - total[0] * total[0] / n)

    counts = np.arange(1, n, dtype=np.float64)[:, None]
    left_sum, left_sq = cum[:-1], cum_sq[:-1]
    right_sum, right_sq = total - left_sum, total_sq - left_sq
    sse = (left_sq - left_sum * left_sum / counts) + (right_sq - right_sum * right_sum / (n - counts))
    gains = sse_node - sse

    valid = x_sorted[:-1] < x_sorted[1:]
    if min_samples_leaf > 1:
        s = np.arange(1, n)
        valid &= ((s >= min_samples_leaf) & (n - s >= min_samples_leaf))[:, None]
    gains = np.where(valid, gains, -np.inf)

    flat = int(np.argmax(gains))
    best_gain = float(gains.flat[flat])
    if not np.isfinite(best_gain) or best_gain <= 1e-12:
        return None
    s, feature = divmod(flat, n_features)
    threshold = float(0.5 * (x_sorted[s, feature] + x_sorted[s + 1, feature]))
    return feature, threshold, best_gain


class BoostedEnsemble:
    """A fitted boosting model: init value plus shrunken trees."""

    def __init__(self, params: GBDTParams, init_value: float, trees: list[RegressionTree], n_features: int):
        self.params = params
        self.init_value = init_value
        self.trees = trees
        self.n_features = n_features
        self.train_mse_trace: list[float] = []

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.full(x.shape[0], self.init_value)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict(x)
        return out

    def feature_importance(self) -> np.ndarray:
        totals = np.zeros(self.n_features)
        for tree in self.trees:
            tree.accumulate_gains(totals)
        s = totals.sum()
        return totals / s if s > 0 else totals


def fit_gbdt(x: np.ndarray, y: np.ndarray, params: GBDTParams) -> BoostedEnsemble:
    """Fit one squared-loss boosted ensemble."""
    params.validate()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be 2-D and y 1-D with matching row counts")
    if x.shape[0] == 0:
        raise ValueError("cannot fit on an empty dataset")

    n = x.shape[0]
    rng = np.random.default_rng(params.seed) if params.subsample < 1.0 else None
    current = np.full(n, float(y.mean()))
    ensemble = BoostedEnsemble(params, float(y.mean()), [], x.shape[1])

    for _ in range(params.num_trees):
        residual = y - current
        if rng is not None:
            size = max(1, int(round(params.subsample * n)))
            rows = np.sort(rng.choice(n, size=size, replace=False))
        else:
            rows = slice(None)
        tree = RegressionTree().fit(
            x[rows], residual[rows], params.max_depth, params.min_samples_leaf
        )
        ensemble.trees.append(tree)
        current += params.learning_rate * tree.predict(x)
        ensemble.train_mse_trace.append(float(np.mean((y - current) ** 2)))
    return ensemble


class MultiOutputGBDT:
    """Independent ensembles, one per output column, sub-seeded per column."""

    def __init__(self, ensembles: list[BoostedEnsemble], params: GBDTParams):
        self.ensembles = ensembles
        self.params = params

    @property
    def n_outputs(self) -> int:
        return len(self.ensembles)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.column_stack([e.predict(x) for e in self.ensembles])

    def feature_importance(self) -> np.ndarray:
        """Mean of per-output normalized importances (still sums to one)."""
        return np.mean([e.feature_importance() for e in self.ensembles], axis=0)


def fit_multi_output_gbdt(x: np.ndarray, y: np.ndarray, params: GBDTParams) -> MultiOutputGBDT:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValueError("y must be 2-D (rows x outputs)")
    ensembles = []
    for j in range(y.shape[1]):
        column_params = GBDTParams(
            num_trees=params.num_trees,
            learning_rate=params.learning_rate,
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            subsample=params.subsample,
            seed=params.seed + j,
        )
        ensembles.append(fit_gbdt(x, y[:, j], column_params))
    return MultiOutputGBDT(ensembles, params)
