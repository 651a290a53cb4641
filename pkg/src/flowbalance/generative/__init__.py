"""Conditional generative oversamplers (C-VAE, C-WGAN-GP, C-DDPM)."""
from __future__ import annotations

import numpy as np

from ..data import FlowTable
from ..nn import load_tensors
from .base import TrainingDiverged, UnknownClass
from .cddpm import CddpmConfig, CddpmModel, Schedule, train_cddpm
from .cvae import CvaeConfig, CvaeModel, train_cvae
from .cwgan import CwganConfig, CwganModel, gradient_penalty, train_cwgan

__all__ = [
    "CddpmConfig", "CddpmModel", "CvaeConfig", "CvaeModel", "CwganConfig", "CwganModel",
    "GeneratorRegistry", "Schedule", "TrainingDiverged", "UnknownClass", "generate",
    "generative_oversample", "gradient_penalty", "load_model", "train_cddpm", "train_cvae",
    "train_cwgan", "train_model",
]

KINDS = {
    "CVAE": (CvaeConfig, train_cvae, CvaeModel),
    "CWGAN": (CwganConfig, train_cwgan, CwganModel),
    "CDDPM": (CddpmConfig, train_cddpm, CddpmModel),
}


def make_config(kind, overrides=None, seed=None):
    cls = KINDS[kind][0]
    overrides = {k: tuple(v) if isinstance(v, list) else v for k, v in (overrides or {}).items()}
    if seed is not None:
        overrides["seed"] = int(seed)
    return cls(**overrides)


def train_model(kind, train: FlowTable, cfg=None):
    if kind not in KINDS:
        raise ValueError(f"unknown generative model {kind!r}")
    return KINDS[kind][1](train, cfg or KINDS[kind][0]())


def generate(model, class_id, count, seed=0) -> np.ndarray:
    """``count`` rows of class ``class_id`` in ``[0, 1]^d``."""
    if count < 0:
        raise ValueError("count must be >= 0")
    return model.generate(int(class_id), int(count), seed)


def load_model(path):
    _, meta = load_tensors(path)
    return KINDS[meta["kind"]][2].load(path)


def _class_seed(seed, class_id):
    return [int(seed), 7919, int(class_id)]


def generative_oversample(train: FlowTable, model_kind: str, cfg=None, seed: int = 0,
                          model=None):
    """Train ``model_kind`` on ``train`` and fill each class up to the majority count.

    Returns ``(table, synthetic_mask, model)``; generated rows follow the
    originals, class by class.
    """
    if train.n_classes < 2:
        raise ValueError("generative oversampling needs at least two classes")
    if model is None:
        cfg = cfg if cfg is not None else make_config(model_kind, seed=seed)
        model = train_model(model_kind, train, cfg)
    counts = train.counts()
    parts, labels = [train.features], [train.labels]
    for c, deficit in enumerate(counts.max() - counts):
        if deficit:
            parts.append(generate(model, c, deficit, _class_seed(seed, c)))
            labels.append(np.full(deficit, c, dtype=np.int64))
    out = train.replace(np.vstack(parts), np.concatenate(labels))
    mask = np.zeros(out.n_rows, dtype=bool)
    mask[train.n_rows:] = True
    return out, mask, model


class GeneratorRegistry:
    """Callable oversamplers for :func:`flowbalance.resample.apply_spec`.

    Trained models are cached per ``(kind, train content, seed)``, so every
    undersampler paired with one generative oversampler reuses the same fit.
    """

    def __init__(self, overrides: dict | None = None):
        self.overrides = overrides or {}
        self._cache: dict = {}
        self.trace: dict = {}

    def model(self, kind, train: FlowTable, seed: int):
        key = (kind, train.content_hash(), int(seed))
        if key not in self._cache:
            cfg = make_config(kind, self.overrides.get(kind), seed=seed)
            self._cache[key] = train_model(kind, train, cfg)
            self.trace[key] = list(self._cache[key].loss_trace)
        return self._cache[key]

    def __contains__(self, kind):
        return kind in KINDS

    def __getitem__(self, kind):
        if kind not in KINDS:
            raise KeyError(kind)

        def oversample(train: FlowTable, seed: int) -> FlowTable:
            model = self.model(kind, train, seed)
            return generative_oversample(train, kind, seed=seed, model=model)[0]

        return oversample
