"""Per-user ground truth: NDCG@k over a portfolio and the derived baselines.

The performance matrix holds one NDCG@k value per (user, algorithm). The
single best algorithm (SBA) is the best column mean; the virtual best
algorithm (VBA) is the mean of per-user row maxima; gap closed measures where
a selector's mean lands between the two.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import AbstractSet, Callable, Mapping, Sequence

import numpy as np

from .data import Dataset, SplitPair
from .errors import EmptyDatasetError
from .recommenders import (
    RecommenderModel,
    TrainMatrix,
    build_train_matrix,
    recommend_top_k,
)

logger = logging.getLogger(__name__)


def ndcg_at_k(ranking: Sequence[str], relevant: AbstractSet[str], k: int = 10) -> float:
    """Binary-gain NDCG@k; the ideal DCG truncates at min(k, |relevant|)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not relevant:
        raise ValueError("relevant set must not be empty")
    dcg = 0.0
    for pos, item in enumerate(ranking[:k]):
        if item in relevant:
            dcg += 1.0 / math.log2(pos + 2)
    ideal = sum(1.0 / math.log2(pos + 2) for pos in range(min(k, len(relevant))))
    return dcg / ideal


@dataclass
class PerformanceMatrix:
    """Users x algorithms NDCG values with id-addressed lookup."""

    users: list[str]
    algorithms: list[str]
    values: np.ndarray
    skipped_users: int = 0
    user_pos: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.users), len(self.algorithms)):
            raise ValueError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.users)} users x {len(self.algorithms)} algorithms"
            )
        self.user_pos = {u: i for i, u in enumerate(self.users)}

    def lookup(self, user: str, algorithm: str) -> float:
        return float(self.values[self.user_pos[user], self.algorithms.index(algorithm)])

    def row(self, user: str) -> np.ndarray:
        return self.values[self.user_pos[user]]

    def column_means(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def subset(self, users: Sequence[str]) -> "PerformanceMatrix":
        rows = [self.user_pos[u] for u in users]
        return PerformanceMatrix(list(users), list(self.algorithms), self.values[rows])

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user"] + self.algorithms)
            for i, user in enumerate(self.users):
                writer.writerow([user] + [f"{v:.10f}" for v in self.values[i]])

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "PerformanceMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "user":
                raise ValueError(f"expected 'user' as first column in {path}")
            algorithms = header[1:]
            users, rows = [], []
            for row in reader:
                users.append(row[0])
                rows.append([float(v) for v in row[1:]])
        return cls(users, algorithms, np.asarray(rows))


def evaluate_portfolio(
    matrix: TrainMatrix,
    test: Dataset,
    models: Mapping[str, RecommenderModel],
    k: int = 10,
    exclude_seen: bool = True,
) -> PerformanceMatrix:
    """NDCG@k of every model for every test user trainable and testable.

    Users absent from the training matrix (or with empty relevant sets, which
    cannot occur for datasets produced by the splitter) are skipped; the count
    is logged and recorded on the returned matrix.
    """
    if not models:
        raise ValueError("models mapping must not be empty")
    relevant_by_user: dict[str, set[str]] = {}
    for it in test.interactions:
        relevant_by_user.setdefault(it.user, set()).add(it.item)

    users, rows, skipped = [], [], 0
    algorithms = list(models)
    for user in test.user_ids:
        relevant = relevant_by_user.get(user)
        if not relevant or user not in matrix.user_index:
            skipped += 1
            continue
        row = []
        for algo in algorithms:
            rec = recommend_top_k(models[algo], user, k=k, exclude_seen=exclude_seen)
            row.append(ndcg_at_k(rec.items, relevant, k=k))
        users.append(user)
        rows.append(row)

    if skipped:
        logger.warning("skipped %d test user(s) absent from training", skipped)
    if not users:
        raise EmptyDatasetError("no test users could be evaluated")
    return PerformanceMatrix(users, algorithms, np.asarray(rows), skipped_users=skipped)


def evaluate_split(
    split: SplitPair,
    models: Mapping[str, RecommenderModel],
    k: int = 10,
    exclude_seen: bool = True,
) -> PerformanceMatrix:
    """Convenience wrapper building the training matrix from a split."""
    return evaluate_portfolio(build_train_matrix(split.train), split.test, models, k, exclude_seen)


def single_best_algorithm(pm: PerformanceMatrix) -> tuple[str, float]:
    """Algorithm with the best column mean; ties go to the earlier column."""
    means = pm.column_means()
    best = int(np.argmax(means))
    return pm.algorithms[best], float(means[best])


def virtual_best_algorithm(pm: PerformanceMatrix) -> float:
    """Mean over users of the per-user best NDCG."""
    return float(pm.values.max(axis=1).mean())


def gap_closed(selector_mean: float, sba_mean: float, vba_mean: float) -> float:
    """Percentage of the SBA-to-VBA gap a selector's mean closes."""
    if vba_mean <= sba_mean:
        raise ValueError("gap is undefined when VBA does not exceed SBA")
    return 100.0 * (selector_mean - sba_mean) / (vba_mean - sba_mean)


@dataclass(frozen=True)
class SelectorOutcome:
    """Realized per-user NDCG of a selection function over a matrix."""

    choices: dict[str, str]
    achieved: dict[str, float]
    mean_ndcg: float


def apply_selector(pm: PerformanceMatrix, choose: Callable[[str], str] | Mapping[str, str]) -> SelectorOutcome:
    """Look up the matrix value of each user's chosen algorithm and average."""
    choices, achieved = {}, {}
    for user in pm.users:
        algo = choose[user] if isinstance(choose, Mapping) else choose(user)
        if algo not in pm.algorithms:
            raise ValueError(f"selector chose unknown algorithm {algo!r} for user {user!r}")
        choices[user] = algo
        achieved[user] = pm.lookup(user, algo)
    mean = float(np.mean(list(achieved.values()))) if achieved else 0.0
    return SelectorOutcome(choices=choices, achieved=achieved, mean_ndcg=mean)
