"""The six classifiers behind one ``fit`` / ``predict`` interface."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..nn import load_tensors, save_tensors
from .base import Classifier
from .forest import ForestModel, fit_dtree, fit_extree, fit_rf
from .gbt import GbtModel, fit_gbt
from .knn import KnnModel, fit_knn, predict_knn
from .mlp import MlpConfig, MlpModel, fit_mlp
from .trees import Tree, TreeNode, gini, leaf_weight, split_gain

__all__ = [
    "CLASSIFIERS", "Classifier", "ClassifierSpec", "DEFAULT_PARAMS", "ForestModel", "GbtModel",
    "KnnModel", "MlpConfig", "MlpModel", "Tree", "TreeNode", "fit_classifier", "fit_dtree",
    "fit_extree", "fit_gbt", "fit_knn", "fit_mlp", "fit_rf", "gini", "leaf_weight",
    "load_classifier", "predict_knn", "save_classifier", "split_gain",
]

CLASSIFIERS = ("KNN", "DTREE", "RF", "EXTREE", "MLP", "GBT")

DEFAULT_PARAMS = {
    "KNN": {"k": 5},
    "DTREE": {"max_depth": None, "min_samples_split": 2},
    "RF": {"n_trees": 100, "max_depth": None},
    "EXTREE": {"n_trees": 100, "max_depth": None},
    "MLP": {"hidden": [64, 64], "epochs": 50, "batch_size": 64, "lr": 1e-3},
    "GBT": {"n_rounds": 100, "max_depth": 6, "learning_rate": 0.3, "l2_lambda": 1.0},
}

# (name, lowest legal value); None means "unbounded" where allowed
_LIMITS = {
    "k": 1, "min_samples_split": 2, "n_trees": 1, "epochs": 0, "batch_size": 1,
    "n_rounds": 0, "max_depth": 0,
}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.kind!r}; expected one of {CLASSIFIERS}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ValueError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        for name, value in self.resolved().items():
            low = _LIMITS.get(name)
            if low is not None and value is not None and value < low:
                raise ValueError(f"{self.kind}: {name}={value} below {low}")
        for name in ("lr", "learning_rate"):
            if name in self.resolved() and not self.resolved()[name] > 0:
                raise ValueError(f"{self.kind}: {name} must be positive")
        if self.resolved().get("l2_lambda", 0) < 0:
            raise ValueError("l2_lambda must be >= 0")

    def resolved(self) -> dict:
        return {**DEFAULT_PARAMS[self.kind], **self.params}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, doc) -> "ClassifierSpec":
        return cls(doc["kind"], dict(doc.get("params", {})), int(doc.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "ClassifierSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_classifier(spec: ClassifierSpec, train) -> Classifier:
    p, seed = spec.resolved(), spec.seed
    if spec.kind == "KNN":
        return fit_knn(train, p["k"])
    if spec.kind == "DTREE":
        return fit_dtree(train, p["max_depth"], p["min_samples_split"], seed)
    if spec.kind == "RF":
        return fit_rf(train, p["n_trees"], p["max_depth"], seed)
    if spec.kind == "EXTREE":
        return fit_extree(train, p["n_trees"], p["max_depth"], seed)
    if spec.kind == "MLP":
        cfg = MlpConfig(tuple(p["hidden"]), p["epochs"], p["batch_size"], p["lr"], seed)
        return fit_mlp(train, cfg)
    return fit_gbt(train, p["n_rounds"], p["max_depth"], p["learning_rate"], p["l2_lambda"], seed)


def save_classifier(model: Classifier, path):
    save_tensors(path, model.tensors(), {"kind": model.kind, **model.meta()})


def load_classifier(path) -> Classifier:
    tensors, meta = load_tensors(path)
    kind = meta["kind"]
    if kind == "KNN":
        return KnnModel.from_tensors(tensors, meta)
    if kind in ("DTREE", "RF", "EXTREE"):
        return ForestModel.from_tensors(tensors, meta, kind)
    if kind == "MLP":
        return MlpModel.from_tensors(tensors, meta)
    if kind == "GBT":
        return GbtModel.from_tensors(tensors, meta)
    raise ValueError(f"{path}: unknown classifier kind {kind!r}")
