"""Implicit-feedback matrix factorization via alternating least squares.

Observed interactions carry confidence c = 1 + alpha * r toward preference 1;
every unobserved cell participates with confidence 1 toward preference 0. Each
half-step solves the exact regularized normal equations for one side, using
the rank-restricted update

    A = Q^T Q + Q_s^T diag(c_s - 1) Q_s + reg * I,   b = Q_s^T c_s,

where s indexes the user's observed items. A is symmetric positive definite
for reg > 0, which the Cholesky factorization asserts on every solve.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ..errors import DivergenceError
from .base import RecommenderModel, TrainMatrix


def solve_side(factors_other: np.ndarray, csr: sp.csr_matrix, alpha: float, reg: float) -> np.ndarray:
    """Solve every row of one side given the other side's factors."""
    n_rows = csr.shape[0]
    k = factors_other.shape[1]
    gram = factors_other.T @ factors_other + reg * np.eye(k)
    out = np.empty((n_rows, k))
    for u in range(n_rows):
        start, end = csr.indptr[u], csr.indptr[u + 1]
        cols = csr.indices[start:end]
        conf = 1.0 + alpha * csr.data[start:end]
        q_s = factors_other[cols]
        a = gram + q_s.T @ ((conf - 1.0)[:, None] * q_s)
        b = q_s.T @ conf
        try:
            chol = scipy.linalg.cho_factor(a, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise DivergenceError(f"ALS normal equations not positive definite: {exc}") from exc
        out[u] = scipy.linalg.cho_solve(chol, b)
    return out


def weighted_objective(p: np.ndarray, q: np.ndarray, csr: sp.csr_matrix, alpha: float, reg: float) -> float:
    """Confidence-weighted squared loss over all cells plus the L2 penalty.

    Materializes the dense score matrix; intended for test-scale matrices.
    """
    scores = p @ q.T
    total = float((scores * scores).sum())  # every cell at baseline confidence 1, target 0
    coo = sp.coo_matrix(csr)
    for u, i, r in zip(coo.row, coo.col, coo.data):
        c = 1.0 + alpha * r
        s = scores[u, i]
        total += c * (1.0 - s) ** 2 - s * s  # replace the baseline term for observed cells
    total += reg * (float((p * p).sum()) + float((q * q).sum()))
    return total


class ImplicitMFModel(RecommenderModel):
    algorithm_id = "implicitmf"

    def __init__(self, matrix, config, p, q):
        super().__init__(matrix, config)
        self.p = p
        self.q = q

    def score_user(self, user_idx: int) -> np.ndarray:
        return self.q @ self.p[user_idx]


def train_implicitmf(
    matrix: TrainMatrix,
    factors: int = 32,
    iterations: int = 15,
    reg: float = 0.1,
    alpha: float = 40.0,
    seed: int = 0,
) -> ImplicitMFModel:
    if factors < 1 or iterations < 0:
        raise ValueError("factors must be >= 1 and iterations >= 0")
    if reg <= 0:
        raise ValueError("reg must be > 0 (positive definiteness of the solves)")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")

    rng = np.random.default_rng(seed)
    p = 0.01 * rng.standard_normal((matrix.n_users, factors))
    q = 0.01 * rng.standard_normal((matrix.n_items, factors))
    csr = matrix.matrix.tocsr()
    csc_t = matrix.matrix.T.tocsr()

    for _ in range(iterations):
        p = solve_side(q, csr, alpha, reg)
        q = solve_side(p, csc_t, alpha, reg)

    config = {
        "factors": factors,
        "iterations": iterations,
        "reg": reg,
        "alpha": alpha,
        "seed": seed,
    }
    return ImplicitMFModel(matrix, config, p, q)
