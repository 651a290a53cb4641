from __future__ import annotations

import dataclasses

import numpy as np

from ..data import FlowTable


class TrainingDiverged(RuntimeError):
    pass


class UnknownClass(ValueError):
    pass


def minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def check_finite(loss, model, epoch):
    if not np.isfinite(loss):
        raise TrainingDiverged(f"{model}: non-finite loss {loss} in epoch {epoch}")


def check_class(class_id, n_classes):
    if not 0 <= int(class_id) < n_classes:
        raise UnknownClass(f"class id {class_id} outside [0, {n_classes})")


def config_dict(cfg) -> dict:
    out = dataclasses.asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def config_from(cls, doc: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in doc.items():
        if k in fields:
            kwargs[k] = tuple(v) if isinstance(v, list) else v
    return cls(**kwargs)


def table_arrays(train: FlowTable):
    if train.n_rows == 0:
        raise ValueError("cannot train a generator on an empty table")
    return train.features, train.labels, train.n_classes
