"""Gini decision tree, random forest and extremely randomized trees."""
from __future__ import annotations

import math

import numpy as np

from .base import Classifier, features_of, xy
from .trees import Tree, grow_classification_tree, presort


class ForestModel(Classifier):
    """Soft-voting ensemble of classification trees (a single tree for DTREE)."""

    def __init__(self, kind, trees: list[Tree], n_classes, params: dict):
        self.kind = kind
        self.trees = trees
        self.n_classes = int(n_classes)
        self.params = params

    def scores(self, X):
        X = features_of(X)
        total = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            total += tree.predict_value(X)
        return total / len(self.trees)

    predict_proba = scores

    def tensors(self):
        out = {}
        for i, tree in enumerate(self.trees):
            out.update(tree.tensors(f"tree{i}."))
        return out

    def meta(self):
        return {"n_classes": self.n_classes, "n_trees": len(self.trees), "params": self.params}

    @classmethod
    def from_tensors(cls, tensors, meta, kind="RF"):
        trees = [Tree.from_tensors(tensors, f"tree{i}.") for i in range(meta["n_trees"])]
        return cls(kind, trees, meta["n_classes"], meta["params"])


def _max_features(spec, d):
    if spec in (None, "all"):
        return d
    if spec == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    return max(1, min(d, int(spec)))


def fit_dtree(train, max_depth=None, min_samples_split=2, seed=0) -> ForestModel:
    """Greedy Gini CART over all features with midpoint thresholds."""
    X, y, K = xy(train)
    tree = grow_classification_tree(X, y, K, max_depth=max_depth, min_samples_split=min_samples_split,
                                    seed=seed)
    params = {"max_depth": max_depth, "min_samples_split": min_samples_split, "seed": seed}
    return ForestModel("DTREE", [tree], K, params)


def _fit_ensemble(kind, train, n_trees, max_depth, min_samples_split, max_features, bootstrap,
                  random_split, seed):
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X, y, K = xy(train)
    n, d = X.shape
    order = presort(X)
    m = _max_features(max_features, d)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        w = np.bincount(rng.integers(0, n, n), minlength=n) if bootstrap else None
        tree_seed = int(rng.integers(0, 2**31 - 1))
        trees.append(grow_classification_tree(X, y, K, order=order, weights=w, max_depth=max_depth,
                                              min_samples_split=min_samples_split, max_features=m,
                                              random_split=random_split, seed=tree_seed))
    params = {"n_trees": n_trees, "max_depth": max_depth, "min_samples_split": min_samples_split,
              "max_features": max_features, "bootstrap": bootstrap, "seed": seed}
    return ForestModel(kind, trees, K, params)


def fit_rf(train, n_trees=100, max_depth=None, seed=0, min_samples_split=2, max_features="sqrt",
           bootstrap=True) -> ForestModel:
    """Bootstrap rows, best split over ``ceil(sqrt(d))`` features drawn per node.

    ``bootstrap=False, max_features="all", n_trees=1`` reproduces :func:`fit_dtree`.
    """
    return _fit_ensemble("RF", train, n_trees, max_depth, min_samples_split, max_features, bootstrap,
                         False, seed)


def fit_extree(train, n_trees=100, max_depth=None, seed=0, min_samples_split=2,
               max_features="sqrt") -> ForestModel:
    """Full sample; one uniform threshold per drawn feature, best candidate kept."""
    return _fit_ensemble("EXTREE", train, n_trees, max_depth, min_samples_split, max_features, False,
                         True, seed)
