"""Classical over/undersampling and cleaning for multi-class tables.

Oversamplers raise every class to the majority count, undersamplers and
cleaners only ever drop rows.  Random draws come from generators keyed on
``(seed, method, class_id)`` so each class is reproducible on its own.
Synthetic rows are appended after the original rows, class by class.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numba import njit

from .data import FlowTable
from .neighbors import NeighborIndex

OVERSAMPLERS = ("None", "ROS", "SMOTE", "ADASYN", "CVAE", "CWGAN", "CDDPM")
UNDERSAMPLERS = ("None", "RUS", "Tomek", "ENN", "NCR", "NM3")
GENERATIVE = ("CVAE", "CWGAN", "CDDPM")

_DISPLAY = {"CVAE": "C-VAE", "CWGAN": "C-WGAN", "CDDPM": "C-DDPM", "NM3": "NM-3"}
_PARSE = {v.lower(): k for k, v in _DISPLAY.items()}
_PARSE.update({k.lower(): k for k in OVERSAMPLERS + UNDERSAMPLERS})

DEFAULT_PARAMS = {"smote_k": 5, "adasyn_k": 5, "enn_k": 3, "ncr_k": 3}

# stream tags so different methods never share a random sequence
_TAG = {"ROS": 1, "SMOTE": 2, "ADASYN": 3, "RUS": 4}


class ResampleError(ValueError):
    pass


class SingleClass(ResampleError):
    pass


class EmptyResult(ResampleError):
    """A cleaner removed every row of at least one class.

    ``kept`` holds the surviving row indices of the cleaner's input and
    ``empty_classes`` the class ids left without rows.
    """

    def __init__(self, kept, empty_classes, method=""):
        self.kept = np.asarray(kept, dtype=np.int64)
        self.empty_classes = tuple(int(c) for c in empty_classes)
        self.method = method
        super().__init__(f"{method or 'cleaning'} emptied classes {list(self.empty_classes)}")


@dataclass(frozen=True)
class ResampleSpec:
    over: str = "None"
    under: str = "None"
    params: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.over not in OVERSAMPLERS:
            raise ValueError(f"unknown oversampler {self.over!r}")
        if self.under not in UNDERSAMPLERS:
            raise ValueError(f"unknown undersampler {self.under!r}")

    def __str__(self):
        return f"{_DISPLAY.get(self.over, self.over)}+{_DISPLAY.get(self.under, self.under)}"

    @classmethod
    def parse(cls, text: str, params: Mapping | None = None) -> "ResampleSpec":
        try:
            over, under = text.split("+")
            return cls(_PARSE[over.strip().lower()], _PARSE[under.strip().lower()], dict(params or {}))
        except (ValueError, KeyError):
            raise ValueError(f"cannot parse resample spec {text!r}") from None

    def param(self, name):
        return self.params.get(name, DEFAULT_PARAMS[name])


def all_specs(params: Mapping | None = None) -> list[ResampleSpec]:
    """The 42 combinations in canonical order (oversampler-major)."""
    return [ResampleSpec(o, u, dict(params or {})) for o in OVERSAMPLERS for u in UNDERSAMPLERS]


def _rng(seed, method, class_id):
    return np.random.default_rng([int(seed), _TAG[method], int(class_id)])


def _require_multiclass(train: FlowTable):
    if train.n_classes < 2:
        raise SingleClass("resampling needs at least two classes")


def _append(train: FlowTable, parts: list[tuple[int, np.ndarray]]) -> FlowTable:
    if not parts:
        return train
    X = [train.features] + [p for _, p in parts]
    y = [train.labels] + [np.full(p.shape[0], c, dtype=np.int64) for c, p in parts]
    return train.replace(np.clip(np.vstack(X), 0.0, 1.0), np.concatenate(y))


def _deficits(train: FlowTable):
    counts = train.counts()
    return counts.max() - counts


def random_oversample(train: FlowTable, seed: int = 0) -> FlowTable:
    _require_multiclass(train)
    parts = []
    for c, deficit in enumerate(_deficits(train)):
        if deficit:
            rows = np.flatnonzero(train.labels == c)
            pick = _rng(seed, "ROS", c).integers(0, rows.size, deficit)
            parts.append((c, train.features[rows[pick]]))
    return _append(train, parts)


def _interpolate(Xc, base, nbr, u):
    return Xc[base] + u[:, None] * (Xc[nbr] - Xc[base])


def smote(train: FlowTable, k: int = 5, seed: int = 0) -> FlowTable:
    """Interpolate between a random class member and one of its k same-class neighbors."""
    _require_multiclass(train)
    if k < 1:
        raise ValueError("k must be >= 1")
    parts = []
    for c, deficit in enumerate(_deficits(train)):
        if not deficit:
            continue
        rng = _rng(seed, "SMOTE", c)
        Xc = train.features[train.labels == c]
        if Xc.shape[0] == 1:
            parts.append((c, np.repeat(Xc, deficit, axis=0)))
            continue
        k_eff = min(k, Xc.shape[0] - 1)
        nn, _ = NeighborIndex(Xc).query(k_eff, self_exclude=True)
        base = rng.integers(0, Xc.shape[0], deficit)
        pick = rng.integers(0, k_eff, deficit)
        u = rng.random(deficit)
        parts.append((c, _interpolate(Xc, base, nn[base, pick], u)))
    return _append(train, parts)


def largest_remainder(total: int, weights) -> np.ndarray:
    """Split integer ``total`` proportionally to ``weights``; sums exactly to ``total``."""
    w = np.asarray(weights, dtype=np.float64)
    exact = total * w / w.sum()
    alloc = np.floor(exact).astype(np.int64)
    short = int(total - alloc.sum())
    if short:
        order = np.argsort(-(exact - alloc), kind="stable")
        alloc[order[:short]] += 1
    return alloc


def adasyn_weights(train: FlowTable, class_id: int, k: int = 5, nn=None) -> np.ndarray:
    """Normalized difficulty ``r_i`` of each member of ``class_id`` (row order).

    ``r_i`` is the share of foreign-class rows among the k nearest neighbors
    in the full table; all-zero difficulty falls back to uniform weights.
    ``nn`` may carry a precomputed self-excluded neighbor matrix.
    """
    members = np.flatnonzero(train.labels == class_id)
    k_full = min(k, train.n_rows - 1)
    if nn is None:
        nn, _ = NeighborIndex(train.features).query(k_full, self_exclude=True)
    r = (train.labels[nn[members]] != class_id).sum(axis=1) / k_full
    if r.sum() == 0:
        return np.full(members.size, 1.0 / members.size)
    return r / r.sum()


def adasyn(train: FlowTable, k: int = 5, seed: int = 0) -> FlowTable:
    _require_multiclass(train)
    if k < 1:
        raise ValueError("k must be >= 1")
    parts = []
    deficits = _deficits(train)
    full_nn = None
    if deficits.any():
        full_nn, _ = NeighborIndex(train.features).query(min(k, train.n_rows - 1), self_exclude=True)
    for c, deficit in enumerate(deficits):
        if not deficit:
            continue
        rng = _rng(seed, "ADASYN", c)
        Xc = train.features[train.labels == c]
        if Xc.shape[0] == 1:
            parts.append((c, np.repeat(Xc, deficit, axis=0)))
            continue
        alloc = largest_remainder(int(deficit), adasyn_weights(train, c, k, full_nn))
        k_eff = min(k, Xc.shape[0] - 1)
        nn, _ = NeighborIndex(Xc).query(k_eff, self_exclude=True)
        base = np.repeat(np.arange(Xc.shape[0]), alloc)
        pick = rng.integers(0, k_eff, base.size)
        u = rng.random(base.size)
        parts.append((c, _interpolate(Xc, base, nn[base, pick], u)))
    return _append(train, parts)


def random_undersample(train: FlowTable, seed: int = 0) -> FlowTable:
    _require_multiclass(train)
    target = train.counts().min()
    keep = []
    for c in range(train.n_classes):
        rows = np.flatnonzero(train.labels == c)
        if rows.size > target:
            rows = _rng(seed, "RUS", c).choice(rows, size=target, replace=False)
        keep.append(rows)
    return train.take(np.sort(np.concatenate(keep)))


def _finish(train: FlowTable, keep: np.ndarray, method: str) -> FlowTable:
    keep = np.sort(np.asarray(keep, dtype=np.int64))
    counts = np.bincount(train.labels[keep], minlength=train.n_classes)
    if (counts == 0).any():
        raise EmptyResult(keep, np.flatnonzero(counts == 0), method)
    return train.take(keep)


def tomek_pairs(train: FlowTable) -> np.ndarray:
    """Rows taking part in a cross-class mutual-nearest-neighbor pair."""
    nn, _ = NeighborIndex(train.features).query(1, self_exclude=True)
    nn = nn[:, 0]
    rows = np.arange(train.n_rows)
    linked = (nn[nn] == rows) & (train.labels[nn] != train.labels)
    return np.flatnonzero(linked)


def tomek_clean(train: FlowTable) -> FlowTable:
    """Drop both endpoints of every Tomek link."""
    _require_multiclass(train)
    drop = np.zeros(train.n_rows, dtype=bool)
    drop[tomek_pairs(train)] = True
    return _finish(train, np.flatnonzero(~drop), "Tomek")


def _vote(neighbor_labels: np.ndarray, n_classes: int) -> np.ndarray:
    votes = np.zeros((neighbor_labels.shape[0], n_classes), dtype=np.int64)
    np.add.at(votes, (np.repeat(np.arange(neighbor_labels.shape[0]), neighbor_labels.shape[1]),
                      neighbor_labels.ravel()), 1)
    return votes.argmax(axis=1)


def _knn_misclassified(X: np.ndarray, y: np.ndarray, k: int, n_classes: int) -> np.ndarray:
    k_eff = min(k, X.shape[0] - 1)
    nn, _ = NeighborIndex(X).query(k_eff, self_exclude=True)
    return _vote(y[nn], n_classes) != y


def enn_clean(train: FlowTable, k: int = 3) -> FlowTable:
    """Wilson editing: drop rows whose k-neighbor plurality disagrees, any class."""
    _require_multiclass(train)
    if k < 1:
        raise ValueError("k must be >= 1")
    bad = _knn_misclassified(train.features, train.labels, k, train.n_classes)
    return _finish(train, np.flatnonzero(~bad), "ENN")


@njit(cache=True)
def _condense(X, y, seeds):
    n, d = X.shape
    kept = np.zeros(n, dtype=np.bool_)
    order = np.empty(n, dtype=np.int64)
    m = 0
    for s in seeds:
        kept[s] = True
    for i in range(n):
        if kept[i]:
            order[m] = i
            m += 1
    # kept rows are scanned in ascending row id, so distance ties go to the lower id
    for i in range(n):
        if kept[i]:
            continue
        best = np.inf
        best_j = -1
        for a in range(m):
            j = order[a]
            s = 0.0
            for t in range(d):
                diff = X[j, t] - X[i, t]
                s += diff * diff
            if s < best or (s == best and j < best_j):
                best = s
                best_j = j
        if y[best_j] != y[i]:
            kept[i] = True
            order[m] = i
            m += 1
    return np.flatnonzero(kept)


def condensed_nn(train: FlowTable) -> np.ndarray:
    """One row-order pass of Hart's condensing, seeded with the lowest row of each class."""
    seeds = np.array([np.flatnonzero(train.labels == c)[0] for c in range(train.n_classes)],
                     dtype=np.int64)
    return _condense(train.features, train.labels, seeds)


def ncr_clean(train: FlowTable, k: int = 3) -> FlowTable:
    """Condense redundant rows, then drop rows a k-neighbor vote misclassifies."""
    _require_multiclass(train)
    if k < 1:
        raise ValueError("k must be >= 1")
    kept = condensed_nn(train)
    bad = _knn_misclassified(train.features[kept], train.labels[kept], k, train.n_classes)
    return _finish(train, kept[~bad], "NCR")


def nearmiss3(train: FlowTable, n_neighbors: int = 3) -> FlowTable:
    """Keep only majority rows that are among the 3 nearest to some minority row.

    The largest class (lowest id on ties) is the majority; every other class
    counts as minority and is kept whole.
    """
    _require_multiclass(train)
    majority = int(train.counts().argmax())
    maj_rows = np.flatnonzero(train.labels == majority)
    min_rows = np.flatnonzero(train.labels != majority)
    k = min(n_neighbors, maj_rows.size)
    nn, _ = NeighborIndex(train.features[maj_rows]).query(k, train.features[min_rows])
    retained = maj_rows[np.unique(nn)]
    return _finish(train, np.concatenate([min_rows, retained]), "NM-3")


@dataclass
class Provenance:
    spec: str
    seed: int
    counts_in: list
    counts_mid: list
    counts_out: list
    n_synthetic: int = 0
    warnings: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


Generator = Callable[[FlowTable, int], FlowTable]


def _oversample(train: FlowTable, spec: ResampleSpec, generators, seed: int) -> FlowTable:
    if spec.over == "None":
        return train
    if spec.over == "ROS":
        return random_oversample(train, seed)
    if spec.over == "SMOTE":
        return smote(train, spec.param("smote_k"), seed)
    if spec.over == "ADASYN":
        return adasyn(train, spec.param("adasyn_k"), seed)
    if generators is None or spec.over not in generators:
        raise ResampleError(f"no generator registered for {spec.over}")
    return generators[spec.over](train, seed)


def _undersample(table: FlowTable, spec: ResampleSpec, seed: int) -> FlowTable:
    if spec.under == "None":
        return table
    if spec.under == "RUS":
        return random_undersample(table, seed)
    if spec.under == "Tomek":
        return tomek_clean(table)
    if spec.under == "ENN":
        return enn_clean(table, spec.param("enn_k"))
    if spec.under == "NCR":
        return ncr_clean(table, spec.param("ncr_k"))
    return nearmiss3(table)


def undersample_with_fallback(table: FlowTable, spec: ResampleSpec, seed: int = 0):
    """Run the undersampling half of ``spec``; restore classes a cleaner empties.

    Returns ``(table, warnings)``.
    """
    try:
        return _undersample(table, spec, seed), []
    except EmptyResult as exc:
        restore = np.flatnonzero(np.isin(table.labels, exc.empty_classes))
        names = [table.class_names[c] for c in exc.empty_classes]
        warning = f"{exc.method} emptied {names}; original rows restored"
        return table.take(np.sort(np.concatenate([exc.kept, restore]))), [warning]


def apply_spec(train: FlowTable, spec: ResampleSpec, generators: Mapping[str, Generator] | None = None,
               seed: int = 0) -> tuple[FlowTable, Provenance]:
    """Oversample, then undersample/clean, recording class counts at each stage."""
    mid = _oversample(train, spec, generators, seed)
    out, warnings = undersample_with_fallback(mid, spec, seed)
    prov = Provenance(str(spec), int(seed), train.counts().tolist(), mid.counts().tolist(),
                      out.counts().tolist(), int(mid.n_rows - train.n_rows), warnings)
    return out, prov
