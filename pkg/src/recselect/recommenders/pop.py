"""Popularity baseline: rank items by training interaction count."""

from __future__ import annotations

import numpy as np

from .base import RecommenderModel, TrainMatrix


class PopularityModel(RecommenderModel):
    algorithm_id = "pop"

    def __init__(self, matrix: TrainMatrix, config: dict, item_scores: np.ndarray):
        super().__init__(matrix, config)
        self.item_scores = item_scores

    def score_user(self, user_idx: int) -> np.ndarray:
        # The ranking is identical for every known user.
        return self.item_scores


def train_pop(matrix: TrainMatrix) -> PopularityModel:
    """Count interactions per item; counts are the scores for every user."""
    scores = matrix.item_counts.astype(np.float64)
    return PopularityModel(matrix, config={}, item_scores=scores)
