import numpy as np
import pytest

from flowbalance.data import FlowTable


def make_table(X, y, names=None):
    y = np.asarray(y)
    k = int(y.max()) + 1
    return FlowTable(np.asarray(X, dtype=float), y, tuple(names or [f"c{i}" for i in range(k)]))


def blobs(n=1000, k=3, seed=0, spread=0.06):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.2, 0.2], [0.8, 0.3], [0.5, 0.8], [0.2, 0.8]])[:k]
    y = np.sort(rng.integers(0, k, n))
    X = np.clip(centers[y] + spread * rng.standard_normal((n, 2)), 0.0, 1.0)
    perm = rng.permutation(n)
    return X[perm], y[perm]


@pytest.fixture
def table():
    return make_table


@pytest.fixture
def blob_data():
    return blobs
