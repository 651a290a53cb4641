from __future__ import annotations

import numpy as np

from ..data import FlowTable


def xy(train):
    """``(X, y, n_classes)`` from a FlowTable or an ``(X, y[, n_classes])`` tuple."""
    if isinstance(train, FlowTable):
        X, y, K = train.features, train.labels, train.n_classes
    else:
        X, y = train[0], train[1]
        y = np.asarray(y, dtype=np.int64)
        K = int(train[2]) if len(train) > 2 else int(y.max()) + 1 if y.size else 0
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("features must be (n, d) with one label per row")
    if X.shape[0] == 0:
        raise ValueError("cannot fit a classifier on an empty training set")
    return X, y, K


def features_of(query):
    if isinstance(query, FlowTable):
        return query.features
    return np.ascontiguousarray(np.atleast_2d(query), dtype=np.float64)


class Classifier:
    """Fitted model: ``scores`` per class, ``predict`` = argmax (lowest id on ties)."""

    kind = ""
    n_classes: int

    def scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(features_of(X)), axis=1).astype(np.int64)

    def tensors(self) -> dict:
        raise NotImplementedError

    def meta(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_tensors(cls, tensors, meta):
        raise NotImplementedError
