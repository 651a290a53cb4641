"""Softmax multilayer perceptron on the shared neural core."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..generative.base import TrainingDiverged, config_dict, config_from, minibatches
from ..nn import NetSpec, Network, softmax_cross_entropy
from .base import Classifier, features_of, xy


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (64, 64)
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("invalid MLP training budget")


class MlpModel(Classifier):
    kind = "MLP"

    def __init__(self, config: MlpConfig, n_features, n_classes, net: Network | None = None):
        self.config = config
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.net = net or Network(NetSpec.mlp(n_features, config.hidden, n_classes, seed=config.seed))
        self.loss_trace: list = []

    def scores(self, X):
        return self.net(features_of(X))

    def tensors(self):
        return self.net.store.tensors("net.")

    def meta(self):
        return {"config": config_dict(self.config), "n_features": self.n_features,
                "n_classes": self.n_classes}

    @classmethod
    def from_tensors(cls, tensors, meta):
        model = cls(config_from(MlpConfig, meta["config"]), meta["n_features"], meta["n_classes"])
        model.net.store.load(tensors, "net.")
        return model


def fit_mlp(train, cfg: MlpConfig | None = None, **overrides) -> MlpModel:
    cfg = cfg or MlpConfig()
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    X, y, K = xy(train)
    model = MlpModel(cfg, X.shape[1], K)
    net = model.net
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in minibatches(X.shape[0], cfg.batch_size, rng):
            net.store.zero_grad()
            logits, cache = net.forward(X[idx])
            loss, grad = softmax_cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"MLP: non-finite loss {loss} in epoch {epoch}")
            net.backward(cache, grad)
            net.store.adam_step(cfg.lr)
            total += loss * idx.size
        model.loss_trace.append(total / X.shape[0])
    return model
