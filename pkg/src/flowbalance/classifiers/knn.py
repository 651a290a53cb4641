"""Brute-force k-nearest-neighbour vote."""
from __future__ import annotations

import numpy as np

from ..neighbors import NeighborIndex
from .base import Classifier, features_of, xy


class KnnModel(Classifier):
    kind = "KNN"

    def __init__(self, X, y, n_classes, k=5):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.X, self.y, self.n_classes, self.k = X, y, int(n_classes), int(k)
        self._index = NeighborIndex(X)

    def scores(self, X):
        X = features_of(X)
        k = min(self.k, self.X.shape[0])
        idx, _ = self._index.query(k, X)
        votes = np.zeros((X.shape[0], self.n_classes))
        np.add.at(votes, (np.repeat(np.arange(X.shape[0]), k), self.y[idx].ravel()), 1.0)
        return votes / k

    def tensors(self):
        return {"X": self.X, "y": self.y}

    def meta(self):
        return {"k": self.k, "n_classes": self.n_classes}

    @classmethod
    def from_tensors(cls, tensors, meta):
        return cls(tensors["X"], tensors["y"], meta["n_classes"], meta["k"])


def fit_knn(train, k=5) -> KnnModel:
    X, y, K = xy(train)
    return KnnModel(X, y, K, k)


def predict_knn(model: KnnModel, query) -> np.ndarray:
    return model.predict(query)
