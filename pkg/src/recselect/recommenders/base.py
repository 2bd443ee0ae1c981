"""Shared training-matrix representation and top-k recommendation.

Every algorithm trains from a :class:`TrainMatrix` and exposes a single
``score_user`` method returning one finite score per training item; ranking,
seen-item exclusion, and tie handling live here so all algorithms share them.
"""

from __future__ import annotations

import hashlib
import json
import pickle
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..data import Dataset
from ..errors import ColdStartError, EmptyDatasetError


@dataclass
class TrainMatrix:
    """Sparse user-item rating matrix with dense id maps and seen-item sets."""

    matrix: sp.csr_matrix
    user_ids: list[str]
    item_ids: list[str]
    user_index: dict[str, int]
    item_index: dict[str, int]
    seen: list[np.ndarray] = field(repr=False)  # sorted item indices per user
    item_counts: np.ndarray = field(repr=False)  # interactions per item

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def binarized(self) -> sp.csr_matrix:
        out = self.matrix.copy()
        out.data = np.ones_like(out.data)
        return out


def build_train_matrix(train: Dataset) -> TrainMatrix:
    """Build the CSR rating matrix from a training split."""
    if not train.interactions:
        raise EmptyDatasetError("cannot build a training matrix from an empty dataset")
    rows = np.fromiter((train.user_index[it.user] for it in train.interactions), dtype=np.int64)
    cols = np.fromiter((train.item_index[it.item] for it in train.interactions), dtype=np.int64)
    vals = np.fromiter((it.rating for it in train.interactions), dtype=np.float64)
    shape = (train.n_users, train.n_items)
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=shape)
    matrix.sum_duplicates()

    seen = [np.unique(cols[rows == u]) for u in range(shape[0])]
    item_counts = np.bincount(cols, minlength=shape[1]).astype(np.int64)
    return TrainMatrix(
        matrix=matrix,
        user_ids=list(train.user_ids),
        item_ids=list(train.item_ids),
        user_index=dict(train.user_index),
        item_index=dict(train.item_index),
        seen=seen,
        item_counts=item_counts,
    )


class RecommenderModel:
    """Base class: a trained model bound to its training matrix ids."""

    algorithm_id: str = "base"

    def __init__(self, matrix: TrainMatrix, config: dict):
        self.matrix = matrix
        self.config = dict(config)
        self.train_seconds = 0.0

    def score_user(self, user_idx: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class RecommendationList:
    """Ranked items for one user; scores are non-increasing."""

    user: str
    items: tuple[str, ...]
    scores: tuple[float, ...]


def rank_items(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the top-k scores, ties broken by ascending item index."""
    n = scores.shape[0]
    # lexsort uses the last key as primary: sort by -score, then index.
    order = np.lexsort((np.arange(n), -scores))
    return order[:k]


def recommend_top_k(
    model: RecommenderModel,
    user: str,
    k: int = 10,
    exclude_seen: bool = True,
) -> RecommendationList:
    """Top-k recommendation for one user known at training time.

    Seen training items are excluded by default; when fewer than k candidates
    remain the list is shorter than k. Unknown users raise ColdStartError.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m = model.matrix
    if user not in m.user_index:
        raise ColdStartError(f"user {user!r} was not seen during training")
    u = m.user_index[user]
    scores = np.asarray(model.score_user(u), dtype=np.float64)
    if scores.shape != (m.n_items,):
        raise ValueError(f"score_user returned shape {scores.shape}, expected ({m.n_items},)")
    if not np.all(np.isfinite(scores)):
        raise ValueError(f"{model.algorithm_id} produced non-finite scores for user {user!r}")

    mask = np.zeros(m.n_items, dtype=bool)
    if exclude_seen:
        mask[m.seen[u]] = True
    candidates = np.flatnonzero(~mask)
    if candidates.size == 0:
        return RecommendationList(user=user, items=(), scores=())
    sub = scores[candidates]
    order = np.lexsort((candidates, -sub))[:k]
    chosen = candidates[order]
    return RecommendationList(
        user=user,
        items=tuple(m.item_ids[j] for j in chosen),
        scores=tuple(float(scores[j]) for j in chosen),
    )


def config_hash(config: dict) -> str:
    """Stable hash of a JSON-able hyperparameter dict."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_model(model: RecommenderModel, path: str) -> None:
    """Serialize a trained model with its algorithm id and config hash."""
    payload = {
        "format_version": 1,
        "algorithm_id": model.algorithm_id,
        "config": model.config,
        "config_hash": config_hash(model.config),
        "model": model,
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh)


def load_model(path: str) -> RecommenderModel:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("format_version") != 1:
        raise ValueError(f"unsupported model format in {path}")
    model = payload["model"]
    if config_hash(model.config) != payload["config_hash"]:
        raise ValueError(f"config hash mismatch in {path}")
    return model
