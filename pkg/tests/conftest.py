"""Shared fixtures and small dataset builders."""

import numpy as np
import pytest

from recselect.data import Dataset, Interaction, temporal_split_per_user
from recselect.recommenders import build_train_matrix


def make_dataset(rows, name="toy"):
    """Build a Dataset from (user, item, rating, timestamp) tuples."""
    return Dataset(name, tuple(Interaction(u, i, float(r), int(t)) for u, i, r, t in rows))


@pytest.fixture
def explicit_toy():
    """Three users, four items, explicit ratings, strictly increasing clocks."""
    return make_dataset(
        [
            ("a", "i1", 5.0, 10),
            ("a", "i2", 3.0, 20),
            ("a", "i3", 4.0, 30),
            ("b", "i1", 1.0, 11),
            ("b", "i4", 2.0, 21),
            ("b", "i2", 5.0, 31),
            ("c", "i3", 4.0, 12),
            ("c", "i4", 4.0, 22),
            ("c", "i1", 2.0, 32),
        ]
    )


@pytest.fixture
def toy_split(explicit_toy):
    return temporal_split_per_user(explicit_toy, 0.2)


@pytest.fixture
def toy_matrix(toy_split):
    return build_train_matrix(toy_split.train)


def random_dataset(rng, n_users=12, n_items=15, min_per_user=2, max_per_user=8, name="rand"):
    """Random implicit dataset; every user gets at least two interactions."""
    rows = []
    ts = 0
    for u in range(n_users):
        size = int(rng.integers(min_per_user, max_per_user + 1))
        items = rng.choice(n_items, size=min(size, n_items), replace=False)
        for i in items:
            rows.append((f"u{u:03d}", f"i{int(i):03d}", 1.0 + float(rng.integers(0, 5)), ts))
            ts += 1
    return make_dataset(rows, name=name)
