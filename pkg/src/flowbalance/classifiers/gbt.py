"""Second-order gradient boosted trees with a softmax link."""
from __future__ import annotations

import numpy as np

from ..nn import log_softmax, one_hot, softmax
from .base import Classifier, features_of, xy
from .trees import Tree, grow_newton_tree, presort


class GbtModel(Classifier):
    kind = "GBT"

    def __init__(self, rounds: list[list[Tree]], n_classes, params: dict, loss_trace=None):
        self.rounds = rounds
        self.n_classes = int(n_classes)
        self.params = params
        self.loss_trace = list(loss_trace or [])

    def scores(self, X):
        X = features_of(X)
        lr = self.params["learning_rate"]
        F = np.zeros((X.shape[0], self.n_classes))
        for trees in self.rounds:
            for k, tree in enumerate(trees):
                F[:, k] += lr * tree.predict_value(X)
        return F

    def tensors(self):
        out = {}
        for r, trees in enumerate(self.rounds):
            for k, tree in enumerate(trees):
                out.update(tree.tensors(f"round{r}.class{k}."))
        return out

    def meta(self):
        return {"n_classes": self.n_classes, "n_rounds": len(self.rounds), "params": self.params}

    @classmethod
    def from_tensors(cls, tensors, meta):
        K = meta["n_classes"]
        rounds = [[Tree.from_tensors(tensors, f"round{r}.class{k}.") for k in range(K)]
                  for r in range(meta["n_rounds"])]
        return cls(rounds, K, meta["params"])


def fit_gbt(train, n_rounds=100, max_depth=6, learning_rate=0.3, l2_lambda=1.0, seed=0) -> GbtModel:
    """Per round and class, fit a Newton tree to softmax cross-entropy gradients.

    ``g = p - y`` and ``h = p (1 - p)``; scores start at zero.  ``n_rounds=0``
    is allowed and leaves uniform scores.  ``loss_trace`` holds the training
    cross-entropy after each round.
    """
    if n_rounds < 0 or max_depth < 0 or l2_lambda < 0 or learning_rate <= 0:
        raise ValueError("invalid boosting hyperparameters")
    X, y, K = xy(train)
    order = presort(X)
    Y = one_hot(y, K)
    F = np.zeros((X.shape[0], K))
    rounds, trace = [], []
    for _ in range(n_rounds):
        P = softmax(F)
        G = P - Y
        H = P * (1.0 - P)
        trees = [grow_newton_tree(X, G[:, k], H[:, k], order=order, max_depth=max_depth,
                                  l2_lambda=l2_lambda) for k in range(K)]
        for k, tree in enumerate(trees):
            F[:, k] += learning_rate * tree.predict_value(X)
        rounds.append(trees)
        trace.append(float(-np.mean(log_softmax(F)[np.arange(len(y)), y])))
    params = {"n_rounds": n_rounds, "max_depth": max_depth, "learning_rate": learning_rate,
              "l2_lambda": l2_lambda, "seed": seed}
    return GbtModel(rounds, K, params, trace)
