"""Confusion-matrix metrics: accuracy, weighted P/R/F1, multiclass MCC, detection rates.

Every score is a percentage; MCC is reported on the [-100, 100] scale.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

MAX_DR_COLUMNS = 10
CSV_COLUMNS = ["Acc", "Prec", "Rec", "F1", "MCC"] + [f"c{i}" for i in range(MAX_DR_COLUMNS)]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]


def confusion(true_labels, predicted_labels, n_classes, class_names=()) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true vs {p.size} predicted")
    for arr in (t, p):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"label outside [0, {n_classes})")
    counts = np.bincount(t * n_classes + p, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes), tuple(class_names))


def _nonempty(cm: ConfusionMatrix):
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return cm.counts.astype(np.float64)


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def accuracy(cm: ConfusionMatrix) -> float:
    c = _nonempty(cm)
    return 100.0 * float(np.trace(c) / c.sum())


def weighted_metrics(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Support-weighted precision, recall and F1 in percent."""
    c = _nonempty(cm)
    diag, rows, cols = np.diag(c), c.sum(axis=1), c.sum(axis=0)
    prec = _ratio(diag, cols)
    rec = _ratio(diag, rows)
    f1 = _ratio(2.0 * prec * rec, prec + rec)
    w = rows / c.sum()
    return 100.0 * float(w @ prec), 100.0 * float(w @ rec), 100.0 * float(w @ f1)


def mcc(cm: ConfusionMatrix) -> float:
    """Multiclass MCC in percent; 0 when the denominator vanishes."""
    c = _nonempty(cm)
    s, tr = c.sum(), np.trace(c)
    p, t = c.sum(axis=0), c.sum(axis=1)
    den = (s * s - p @ p) * (s * s - t @ t)
    if den <= 0:
        return 0.0
    return 100.0 * float((tr * s - p @ t) / np.sqrt(den))


def detection_rate(cm: ConfusionMatrix) -> np.ndarray:
    """Per-class recall in percent, 0 for classes absent from the truth."""
    c = _nonempty(cm)
    return 100.0 * _ratio(np.diag(c), c.sum(axis=1))


@dataclass(frozen=True)
class MetricsBundle:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    detection_rate: tuple
    absent_classes: tuple = ()

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["detection_rate"] = list(self.detection_rate)
        doc["absent_classes"] = list(self.absent_classes)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc) -> "MetricsBundle":
        return cls(doc["accuracy"], doc["precision"], doc["recall"], doc["f1"], doc["mcc"],
                   tuple(doc["detection_rate"]), tuple(doc.get("absent_classes", ())))

    def csv_row(self) -> dict:
        row = {"Acc": self.accuracy, "Prec": self.precision, "Rec": self.recall, "F1": self.f1,
               "MCC": self.mcc}
        for i in range(MAX_DR_COLUMNS):
            row[f"c{i}"] = self.detection_rate[i] if i < len(self.detection_rate) else None
        return row


def evaluate(cm: ConfusionMatrix) -> MetricsBundle:
    prec, rec, f1 = weighted_metrics(cm)
    absent = tuple(int(i) for i in np.flatnonzero(cm.counts.sum(axis=1) == 0))
    return MetricsBundle(accuracy(cm), prec, rec, f1, mcc(cm),
                         tuple(float(v) for v in detection_rate(cm)), absent)


def evaluate_labels(true_labels, predicted_labels, n_classes) -> MetricsBundle:
    return evaluate(confusion(true_labels, predicted_labels, n_classes))
