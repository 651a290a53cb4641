"""NetFlow ingestion, normalization and stratified splitting.

A :class:`FeatureSchema` decides which CSV columns are model features, which
are discarded (addresses, ports, L7 protocol, binary label) and which one
carries the attack-type label.  Features are min-max scaled with the fixed
per-field ranges declared in the schema, never with ranges estimated from the
data, so train and test share one scale.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

ROLES = ("feature", "dropped", "label")


class SchemaError(ValueError):
    pass


class MultipleLabels(SchemaError):
    pass


class MissingLabel(SchemaError):
    pass


class DuplicateField(SchemaError):
    pass


class InvalidRange(SchemaError):
    pass


class IngestError(ValueError):
    pass


class MissingColumn(IngestError):
    pass


class NonNumericCell(IngestError):
    pass


class EmptyFile(IngestError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class FieldSpec:
    name: str
    role: str
    range_min: float = 0.0
    range_max: float = 1.0


@dataclass(frozen=True)
class FeatureSchema:
    entries: tuple[FieldSpec, ...]
    class_order: tuple[str, ...] | None = None

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.role not in ROLES:
                raise SchemaError(f"unknown role {e.role!r} for field {e.name!r}")
            if e.name in seen:
                raise DuplicateField(e.name)
            seen.add(e.name)
            if e.role == "feature" and not e.range_min < e.range_max:
                raise InvalidRange(f"{e.name}: min {e.range_min} >= max {e.range_max}")
        labels = [e for e in self.entries if e.role == "label"]
        if len(labels) > 1:
            raise MultipleLabels(", ".join(e.name for e in labels))
        if not labels:
            raise MissingLabel("schema declares no label field")
        if self.class_order is not None and len(set(self.class_order)) != len(self.class_order):
            raise SchemaError("class_order contains duplicates")

    @property
    def features(self) -> list[FieldSpec]:
        return [e for e in self.entries if e.role == "feature"]

    @property
    def feature_names(self) -> list[str]:
        return [e.name for e in self.entries if e.role == "feature"]

    @property
    def label(self) -> str:
        return next(e.name for e in self.entries if e.role == "label")

    @property
    def dropped(self) -> list[str]:
        return [e.name for e in self.entries if e.role == "dropped"]

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        if not isinstance(doc, dict) or not isinstance(doc.get("fields"), list):
            raise SchemaError('schema must be an object with a "fields" list')
        entries = []
        for raw in doc["fields"]:
            try:
                name, role = raw["name"], raw["role"]
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"malformed field entry {raw!r}") from exc
            if role == "feature":
                try:
                    lo, hi = float(raw["min"]), float(raw["max"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise SchemaError(f"feature {name!r} needs numeric min/max") from exc
                entries.append(FieldSpec(name, role, lo, hi))
            else:
                entries.append(FieldSpec(name, role))
        order = doc.get("class_order")
        return cls(tuple(entries), tuple(order) if order is not None else None)

    def to_dict(self) -> dict:
        fields = []
        for e in self.entries:
            d = {"name": e.name, "role": e.role}
            if e.role == "feature":
                d["min"], d["max"] = e.range_min, e.range_max
            fields.append(d)
        doc = {"fields": fields}
        if self.class_order is not None:
            doc["class_order"] = list(self.class_order)
        return doc


def load_schema(path) -> FeatureSchema:
    """Read and validate a JSON schema file."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return FeatureSchema.from_dict(doc)


def builtin_schema(name: str) -> FeatureSchema:
    """Schema shipped with the package (``nf_bot_iot``, ``nf_ton_iot``, ``nf_unsw_nb15``)."""
    text = resources.files("flowbalance.schemas").joinpath(f"{name}.json").read_text()
    return FeatureSchema.from_dict(json.loads(text))


def identity_schema(feature_names: Sequence[str], label: str = "label",
                    class_order: Sequence[str] | None = None) -> FeatureSchema:
    entries = [FieldSpec(n, "feature", 0.0, 1.0) for n in feature_names]
    entries.append(FieldSpec(label, "label"))
    return FeatureSchema(tuple(entries), tuple(class_order) if class_order is not None else None)


@dataclass(frozen=True, eq=False)
class FlowTable:
    """Normalized feature matrix with integer class labels.

    ``features`` is ``(n, d)`` float64 in ``[0, 1]``; ``labels`` indexes into
    ``class_names``.  Every declared class must own at least one row.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    feature_names: tuple[str, ...] = ()
    schema: FeatureSchema | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, dtype=np.int64, copy=True)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if X.size and (np.isnan(X).any() or X.min() < 0.0 or X.max() > 1.0):
            raise ValueError("feature values must lie in [0, 1]")
        k = len(self.class_names)
        if y.size and (y.min() < 0 or y.max() >= k):
            raise ValueError("label outside declared classes")
        counts = np.bincount(y, minlength=k)
        if k and (counts == 0).any():
            missing = [self.class_names[i] for i in np.flatnonzero(counts == 0)]
            raise ValueError(f"declared classes without rows: {missing}")
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("feature_names length does not match column count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, rows) -> "FlowTable":
        rows = np.asarray(rows, dtype=np.int64)
        return self.replace(self.features[rows], self.labels[rows])

    def replace(self, features, labels) -> "FlowTable":
        return FlowTable(features, labels, self.class_names, self.feature_names, self.schema)

    def equals(self, other: "FlowTable") -> bool:
        return (self.class_names == other.class_names
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update("\x1f".join(self.class_names).encode())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: FlowTable
    test: FlowTable
    seed: int
    train_fraction: float
    train_rows: np.ndarray = field(repr=False, default=None)
    test_rows: np.ndarray = field(repr=False, default=None)


def _normalize_labels(values: Iterable[str]) -> list[str]:
    return [str(v).strip() for v in values]


def ingest_frame(frame: pd.DataFrame, schema: FeatureSchema,
                 class_order: Sequence[str] | None = None) -> tuple[FlowTable, dict[str, int]]:
    """Apply ``schema`` to an already-loaded frame.

    Returns the table and a per-field tally of values clipped into ``[0, 1]``.
    """
    if frame.shape[0] == 0:
        raise EmptyFile("no data rows")
    required = schema.feature_names + [schema.label]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MissingColumn(", ".join(missing))

    n = frame.shape[0]
    feats = schema.features
    X = np.empty((n, len(feats)), dtype=np.float64)
    clipped: dict[str, int] = {}
    for j, spec in enumerate(feats):
        col = frame[spec.name]
        values = pd.to_numeric(col, errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            raise NonNumericCell(f"{spec.name} row {row}: {col.iloc[row]!r}")
        scaled = (values - spec.range_min) / (spec.range_max - spec.range_min)
        out = (scaled < 0.0) | (scaled > 1.0)
        if out.any():
            clipped[spec.name] = int(out.sum())
            scaled = np.clip(scaled, 0.0, 1.0)
        X[:, j] = scaled

    raw_labels = _normalize_labels(frame[schema.label].tolist())
    order = class_order if class_order is not None else schema.class_order
    if order is None:
        names: list[str] = list(dict.fromkeys(raw_labels))
        lookup = {name: i for i, name in enumerate(names)}
        y = np.fromiter((lookup[v] for v in raw_labels), dtype=np.int64, count=n)
    else:
        names = list(order)
        # label spellings differ in case between dataset releases
        lookup = {name.lower(): i for i, name in enumerate(names)}
        try:
            y = np.fromiter((lookup[v.lower()] for v in raw_labels), dtype=np.int64, count=n)
        except KeyError as exc:
            raise IngestError(f"label {exc.args[0]!r} not in class order {names}") from None
    table = FlowTable(X, y, tuple(names), tuple(schema.feature_names), schema)
    return table, clipped


def ingest_csv(path, schema: FeatureSchema,
               class_order: Sequence[str] | None = None) -> tuple[FlowTable, dict[str, int]]:
    """Load a NetFlow CSV, drop non-feature columns and min-max normalize."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={schema.label: str}, float_precision="round_trip",
                            low_memory=False)
    except pd.errors.EmptyDataError:
        raise EmptyFile(str(path)) from None
    return ingest_frame(frame, schema, class_order)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _class_rng(seed: int, class_id: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(class_id)])


def stratified_split(table: FlowTable, train_fraction: float = 0.8, seed: int = 0) -> SplitPair:
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must be in (0, 1), got {train_fraction}")
    counts = table.counts()
    if (counts < 2).any():
        small = [table.class_names[c] for c in np.flatnonzero(counts < 2)]
        raise SplitError(f"classes with fewer than 2 rows: {small}")
    train_parts, test_parts = [], []
    for c in range(table.n_classes):
        rows = np.flatnonzero(table.labels == c)
        rows = rows[_class_rng(seed, c).permutation(rows.size)]
        n_train = min(max(_round_half_up(train_fraction * rows.size), 1), rows.size - 1)
        train_parts.append(rows[:n_train])
        test_parts.append(rows[n_train:])
    train_rows = np.sort(np.concatenate(train_parts))
    test_rows = np.sort(np.concatenate(test_parts))
    return SplitPair(table.take(train_rows), table.take(test_rows), seed, train_fraction,
                     train_rows, test_rows)


def subsample(table: FlowTable, per_class_cap: int, seed: int = 0) -> FlowTable:
    """Cap every class at ``per_class_cap`` rows chosen by a seeded shuffle.

    Classes below the cap are kept whole, so proportions survive only among
    classes that are not truncated.
    """
    if per_class_cap < 2:
        raise ValueError("per_class_cap must be >= 2")
    keep = []
    for c in range(table.n_classes):
        rows = np.flatnonzero(table.labels == c)
        if rows.size > per_class_cap:
            rows = np.sort(rows[_class_rng(seed, c).permutation(rows.size)[:per_class_cap]])
        keep.append(rows)
    return table.take(np.sort(np.concatenate(keep)))


def save_table(table: FlowTable, path) -> Path:
    """Write normalized features plus an integer ``label`` column.

    Class names go to a ``<stem>.classes.json`` sidecar next to the CSV.
    """
    path = Path(path)
    frame = pd.DataFrame(table.features, columns=list(table.feature_names))
    frame["label"] = table.labels
    frame.to_csv(path, index=False)
    sidecar = path.with_name(path.stem + ".classes.json")
    sidecar.write_text(json.dumps({"class_names": list(table.class_names)}, indent=2) + "\n")
    return path


def load_table(path) -> FlowTable:
    path = Path(path)
    sidecar = path.with_name(path.stem + ".classes.json")
    names = json.loads(sidecar.read_text())["class_names"]
    frame = pd.read_csv(path, float_precision="round_trip")
    if "label" not in frame.columns:
        raise MissingColumn("label")
    feats = [c for c in frame.columns if c != "label"]
    return FlowTable(frame[feats].to_numpy(dtype=np.float64),
                     frame["label"].to_numpy(dtype=np.int64), tuple(names), tuple(feats))
