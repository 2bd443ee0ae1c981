"""EASE: closed-form item-item linear autoencoder with a zero diagonal.

With Gram matrix G = X^T X + l2 * I and P = G^{-1}, the item weight matrix is

    B = I - P * diag(1 / diag(P)),   diag(B) = 0,

the exact solution of min |X - XB|_F^2 + l2 |B|_F^2 s.t. diag(B) = 0.
User scores are the corresponding row of X B.
"""

from __future__ import annotations

import numpy as np

from ..errors import MatrixInversionError
from .base import RecommenderModel, TrainMatrix


def ease_weights(x_gram: np.ndarray, l2: float) -> np.ndarray:
    """Solve for B from a dense item Gram matrix."""
    g = x_gram + l2 * np.eye(x_gram.shape[0])
    try:
        p = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise MatrixInversionError(
            f"Gram matrix inversion failed at l2={l2}; increase the l2 penalty"
        ) from exc
    diag = np.diag(p)
    if not np.all(np.isfinite(p)) or np.any(diag == 0):
        raise MatrixInversionError(
            f"Gram matrix is numerically singular at l2={l2}; increase the l2 penalty"
        )
    b = -p / diag[None, :]
    np.fill_diagonal(b, 0.0)
    return b


class EaseModel(RecommenderModel):
    algorithm_id = "ease"

    def __init__(self, matrix, config, x, b):
        super().__init__(matrix, config)
        self.x = x
        self.b = b

    def score_user(self, user_idx: int) -> np.ndarray:
        row = np.asarray(self.x[user_idx, :].todense()).ravel()
        return row @ self.b


def train_ease(matrix: TrainMatrix, l2: float = 10.0, binarize: bool = True) -> EaseModel:
    if l2 <= 0:
        raise ValueError("l2 must be > 0")
    x = matrix.binarized() if binarize else matrix.matrix
    gram = np.asarray((x.T @ x).todense())
    b = ease_weights(gram, l2)
    return EaseModel(matrix, {"l2": l2, "binarize": binarize}, x.tocsr(), b)
