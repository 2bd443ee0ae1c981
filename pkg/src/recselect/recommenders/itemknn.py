"""Item-based k-nearest-neighbour collaborative filtering.

Item-item cosine similarities are computed on training columns, the diagonal
is zeroed, and each candidate item keeps only its ``neighbors`` most similar
items. A user's score for a candidate is the sum of retained similarities
between the candidate and the items in the user's training history (binary
membership, so history ratings do not reweight the sum).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .base import RecommenderModel, TrainMatrix


def cosine_similarity_columns(x: sp.csr_matrix) -> sp.csr_matrix:
    """Pairwise cosine similarity between columns; zero-norm columns give 0."""
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=0)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    normalized = x @ sp.diags(inv)
    sims = (normalized.T @ normalized).tocsc()
    sims.setdiag(0.0)
    sims.eliminate_zeros()
    return sims


def truncate_columns(sims: sp.spmatrix, neighbors: int) -> sp.csc_matrix:
    """Keep the top ``neighbors`` entries of each column, ties to lower index."""
    sims = sims.tocsc()
    data, indices, indptr = [], [], [0]
    for j in range(sims.shape[1]):
        start, end = sims.indptr[j], sims.indptr[j + 1]
        col_idx = sims.indices[start:end]
        col_val = sims.data[start:end]
        if col_idx.size > neighbors:
            order = np.lexsort((col_idx, -col_val))[:neighbors]
            col_idx, col_val = col_idx[order], col_val[order]
            resort = np.argsort(col_idx)
            col_idx, col_val = col_idx[resort], col_val[resort]
        indices.append(col_idx)
        data.append(col_val)
        indptr.append(indptr[-1] + col_idx.size)
    return sp.csc_matrix(
        (np.concatenate(data) if data else np.empty(0),
         np.concatenate(indices) if indices else np.empty(0, dtype=np.int64),
         np.asarray(indptr)),
        shape=sims.shape,
    )


class ItemKnnModel(RecommenderModel):
    algorithm_id = "itemknn"

    def __init__(self, matrix: TrainMatrix, config: dict, sims: sp.csc_matrix):
        super().__init__(matrix, config)
        self.sims = sims

    def score_user(self, user_idx: int) -> np.ndarray:
        history = self.matrix.seen[user_idx]
        if history.size == 0:
            return np.zeros(self.matrix.n_items)
        return np.asarray(self.sims[history, :].sum(axis=0)).ravel()


def train_itemknn(matrix: TrainMatrix, neighbors: int = 50, binarize: bool = True) -> ItemKnnModel:
    if neighbors < 1:
        raise ValueError("neighbors must be >= 1")
    x = matrix.binarized() if binarize else matrix.matrix
    sims = truncate_columns(cosine_similarity_columns(x), neighbors)
    return ItemKnnModel(matrix, {"neighbors": neighbors, "binarize": binarize}, sims)
