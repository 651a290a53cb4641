"""Experiment grid: datasets x resample specs x classifiers x seeds.

Each (dataset, seed, spec) unit resamples the training split once and fits
every enabled classifier on it; the test split is never touched by
resampling.  Seeds are derived from stable hashes of cell coordinates, so
results do not depend on execution order or on ``jobs``.
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import CLASSIFIERS, ClassifierSpec, fit_classifier
from .data import FlowTable, builtin_schema, ingest_csv, load_schema, stratified_split, subsample
from .generative import GeneratorRegistry, TrainingDiverged
from .metrics import MetricsBundle, evaluate_labels
from .resample import GENERATIVE, ResampleSpec, all_specs, apply_spec
from .surrogate import bot_iot_table

BASELINE = "None+None"


class ConfigError(ValueError):
    pass


class MissingBaseline(ValueError):
    pass


def stable_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    schema: str = "nf_bot_iot"
    path: str | None = None
    cap: int | None = 2000
    # use the synthetic NF-BoT-IoT stand-in when ``path`` is unset or missing
    surrogate: bool = False
    train_fraction: float = 0.8
    subsample_seed: int = 0

    def load_schema(self):
        if Path(self.schema).suffix == ".json":
            return load_schema(self.schema)
        return builtin_schema(self.schema)


@dataclass(frozen=True)
class GridConfig:
    datasets: tuple
    specs: tuple = tuple(str(s) for s in all_specs())
    classifiers: tuple = CLASSIFIERS
    seeds: tuple = (0, 1, 2)
    resample_params: dict = field(default_factory=dict)
    generator_overrides: dict = field(default_factory=dict)
    classifier_overrides: dict = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self):
        if not self.datasets:
            raise ConfigError("config names no datasets")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError("dataset names must be unique")
        for s in self.specs:
            ResampleSpec.parse(s)
        for k in self.classifiers:
            if k not in CLASSIFIERS:
                raise ConfigError(f"unknown classifier {k!r}")
        if not self.seeds:
            raise ConfigError("config names no seeds")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "GridConfig":
        try:
            datasets = tuple(DatasetConfig(**d) for d in doc["datasets"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid dataset entry: {exc}") from None
        kwargs = {"datasets": datasets}
        if "specs" in doc:
            kwargs["specs"] = tuple(str(ResampleSpec.parse(s)) for s in doc["specs"])
        for key in ("classifiers", "seeds"):
            if key in doc:
                kwargs[key] = tuple(doc[key])
        for key in ("resample_params", "generator_overrides", "classifier_overrides"):
            if key in doc:
                kwargs[key] = dict(doc[key])
        if "jobs" in doc:
            kwargs["jobs"] = int(doc["jobs"])
        unknown = set(doc) - set(kwargs) - {"datasets"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "GridConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "datasets": [d.__dict__ for d in self.datasets],
            "specs": list(self.specs),
            "classifiers": list(self.classifiers),
            "seeds": list(self.seeds),
            "resample_params": self.resample_params,
            "generator_overrides": self.generator_overrides,
            "classifier_overrides": self.classifier_overrides,
        }


@dataclass
class ResultRecord:
    dataset: str
    classifier: str
    spec: str
    seed: int
    status: str
    metrics: MetricsBundle | None
    class_counts_after_resample: list | None
    test_hash: str
    warnings: list = field(default_factory=list)
    error: str | None = None
    timings: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "ok"

    def key(self):
        return (self.dataset, self.classifier, self.spec, self.seed)

    def to_dict(self, timings=True) -> dict:
        doc = {
            "dataset": self.dataset, "classifier": self.classifier, "spec": self.spec,
            "seed": self.seed, "status": self.status,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "class_counts_after_resample": self.class_counts_after_resample,
            "test_hash": self.test_hash, "warnings": list(self.warnings), "error": self.error,
        }
        if timings:
            doc["timings"] = dict(self.timings)
        return doc

    @classmethod
    def from_dict(cls, doc) -> "ResultRecord":
        metrics = MetricsBundle.from_dict(doc["metrics"]) if doc.get("metrics") else None
        return cls(doc["dataset"], doc["classifier"], doc["spec"], int(doc["seed"]), doc["status"],
                   metrics, doc.get("class_counts_after_resample"), doc["test_hash"],
                   list(doc.get("warnings", [])), doc.get("error"), dict(doc.get("timings", {})))


@dataclass(frozen=True, eq=False)
class LoadedDataset:
    name: str
    table: FlowTable
    source: str
    clipped: dict


def load_dataset(ds: DatasetConfig) -> LoadedDataset:
    if ds.path and Path(ds.path).exists():
        table, clipped = ingest_csv(ds.path, ds.load_schema())
        if ds.cap is not None:
            table = subsample(table, ds.cap, ds.subsample_seed)
        return LoadedDataset(ds.name, table, str(ds.path), clipped)
    if ds.surrogate:
        table, clipped = bot_iot_table(ds.cap, ds.subsample_seed)
        return LoadedDataset(ds.name, table, "surrogate:nf_bot_iot", clipped)
    raise FileNotFoundError(f"dataset {ds.name!r}: file {ds.path!r} not found and no surrogate allowed")


def resample_seed(dataset, seed):
    # shared by every spec so one oversampled table serves all cleaners
    return stable_seed("resample", dataset, seed)


def classifier_seed(dataset, spec, classifier, seed):
    return stable_seed("classifier", dataset, spec, classifier, seed)


def _failed(dataset, classifier, spec, seed, test_hash, error, warnings=(), counts=None, timings=None):
    return ResultRecord(dataset, classifier, spec, seed, "failed", None, counts, test_hash,
                        list(warnings), error, dict(timings or {}))


def run_unit(dataset: str, seed: int, spec_text: str, train: FlowTable, test: FlowTable,
             classifiers, config: GridConfig, oversampled=None, generators=None):
    """Resample ``train`` once under ``spec_text`` and evaluate every classifier.

    ``oversampled`` may carry a precomputed ``(table | exception, ms)`` for the
    oversampling half (used for generative models trained once per seed).
    """
    spec = ResampleSpec.parse(spec_text, config.resample_params)
    test_hash = test.content_hash()
    rs = resample_seed(dataset, seed)
    t0 = time.perf_counter()
    try:
        if oversampled is not None:
            mid, mid_ms = oversampled
            if isinstance(mid, Exception):
                raise mid
            gens = {spec.over: lambda _t, _s: mid}
        else:
            mid_ms, gens = 0.0, generators
        resampled, prov = apply_spec(train, spec, gens, rs)
    except Exception as exc:  # noqa: BLE001 - failures become records
        msg = f"resample: {type(exc).__name__}: {exc}"
        return [_failed(dataset, k, str(spec), seed, test_hash, msg) for k in classifiers]
    resample_ms = mid_ms + 1000.0 * (time.perf_counter() - t0)
    counts = resampled.counts().tolist()

    out = []
    for kind in classifiers:
        timings = {"resample_ms": resample_ms}
        cspec = ClassifierSpec(kind, dict(config.classifier_overrides.get(kind, {})),
                               classifier_seed(dataset, str(spec), kind, seed))
        try:
            t1 = time.perf_counter()
            model = fit_classifier(cspec, resampled)
            t2 = time.perf_counter()
            pred = model.predict(test.features)
            t3 = time.perf_counter()
        except Exception as exc:  # noqa: BLE001
            out.append(_failed(dataset, kind, str(spec), seed, test_hash,
                               f"classifier: {type(exc).__name__}: {exc}", prov.warnings, counts, timings))
            continue
        timings.update(train_ms=1000.0 * (t2 - t1), predict_ms=1000.0 * (t3 - t2))
        metrics = evaluate_labels(test.labels, pred, test.n_classes)
        warnings = list(prov.warnings)
        if metrics.absent_classes:
            warnings.append(f"classes absent from test: {list(metrics.absent_classes)}")
        out.append(ResultRecord(dataset, kind, str(spec), seed, "ok", metrics, counts,
                                test.content_hash(), warnings, None, timings))
    return out


def _unit_job(args):
    return run_unit(*args)


def _generative_tables(dataset, seed, train, config, kinds):
    """Oversample once per generative kind; failures are carried as exceptions."""
    registry = GeneratorRegistry(config.generator_overrides)
    rs = resample_seed(dataset, seed)
    out = {}
    for kind in kinds:
        t0 = time.perf_counter()
        try:
            table = registry[kind](train, rs)
        except (TrainingDiverged, ValueError, FloatingPointError) as exc:
            table = exc
        out[kind] = (table, 1000.0 * (time.perf_counter() - t0))
    return out


def run_grid(config: GridConfig, events=None, progress=None) -> tuple[list[ResultRecord], dict]:
    """Run every enabled cell; returns ``(records, dataset_info)``.

    ``events`` (optional callable) receives warning/failure event dicts in
    canonical order; ``progress`` receives ``(done_units, total_units)``.
    """
    specs = [str(ResampleSpec.parse(s)) for s in config.specs]
    order = {str(s): i for i, s in enumerate(all_specs())}
    specs.sort(key=order.__getitem__)
    classifiers = [k for k in CLASSIFIERS if k in config.classifiers]
    records, info = [], {}
    total = len(config.datasets) * len(config.seeds) * len(specs)
    done = 0
    pool = ProcessPoolExecutor(config.jobs) if config.jobs > 1 else None
    try:
        for ds in config.datasets:
            loaded = load_dataset(ds)
            info[ds.name] = {"source": loaded.source, "clipped": loaded.clipped,
                             "class_names": list(loaded.table.class_names),
                             "counts": loaded.table.counts().tolist()}
            for seed in config.seeds:
                split = stratified_split(loaded.table, ds.train_fraction, seed)
                kinds = sorted({ResampleSpec.parse(s).over for s in specs} & set(GENERATIVE))
                gen = _generative_tables(ds.name, seed, split.train, config, kinds)
                jobs = [(ds.name, seed, s, split.train, split.test, classifiers, config,
                         gen.get(ResampleSpec.parse(s).over)) for s in specs]
                results = pool.map(_unit_job, jobs) if pool else map(_unit_job, jobs)
                for unit in results:
                    records.extend(unit)
                    done += 1
                    if progress:
                        progress(done, total)
    finally:
        if pool:
            pool.shutdown()
    if events:
        for rec in records:
            for w in rec.warnings:
                events({"event": "warning", "cell": list(rec.key()), "message": w})
            if not rec.ok:
                events({"event": "failure", "cell": list(rec.key()), "message": rec.error})
    return records, info


def run_cell(config: GridConfig, dataset: str, spec: str, classifier: str, seed: int) -> ResultRecord:
    """Recompute one grid cell in isolation."""
    ds = next((d for d in config.datasets if d.name == dataset), None)
    if ds is None:
        raise ConfigError(f"unknown dataset {dataset!r}")
    split = stratified_split(load_dataset(ds).table, ds.train_fraction, seed)
    parsed = ResampleSpec.parse(spec)
    gen = None
    if parsed.over in GENERATIVE:
        gen = _generative_tables(dataset, seed, split.train, config, [parsed.over])[parsed.over]
    return run_unit(dataset, seed, str(parsed), split.train, split.test, [classifier], config, gen)[0]


def audit_test_hashes(records) -> dict:
    """Map each (dataset, classifier, seed) to its set of test hashes; all sets must be singletons."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.dataset, r.classifier, r.seed), set()).add(r.test_hash)
    return groups


def _mean_over_seeds(records, value):
    acc: dict = {}
    for r in records:
        acc.setdefault((r.dataset, r.classifier, r.spec), []).append(value(r) if r.ok else None)
    out = {}
    for key, vals in acc.items():
        good = [v for v in vals if v is not None]
        out[key] = float(np.mean(good)) if good else None
    return out


def delta_matrix(records) -> dict:
    """``{(dataset, classifier): {spec: delta MCC}}``; positive means better than baseline.

    Per seed the delta is spec MCC minus the same seed's baseline MCC, then
    averaged over seeds where both succeeded.  Failed specs map to ``None``.
    """
    base = {}
    for r in records:
        if r.spec == BASELINE and r.ok:
            base[(r.dataset, r.classifier, r.seed)] = r.metrics.mcc
    acc: dict = {}
    for r in records:
        key = (r.dataset, r.classifier, r.seed)
        if key not in base:
            raise MissingBaseline(f"no successful {BASELINE} record for {key}")
        cell = acc.setdefault((r.dataset, r.classifier), {}).setdefault(r.spec, [])
        cell.append(0.0 if r.spec == BASELINE else (r.metrics.mcc - base[key] if r.ok else None))
    order = {str(s): i for i, s in enumerate(all_specs())}
    out = {}
    for key, by_spec in acc.items():
        out[key] = {}
        for spec in sorted(by_spec, key=order.__getitem__):
            good = [v for v in by_spec[spec] if v is not None]
            out[key][spec] = 0.0 if spec == BASELINE else (float(np.mean(good)) if good else None)
    return out


def best_per_model(records) -> list[dict]:
    """Baseline and max-MCC spec per (dataset, classifier), metrics averaged over seeds."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    order = {str(s): i for i, s in enumerate(all_specs())}
    fields = {"accuracy": lambda r: r.metrics.accuracy, "precision": lambda r: r.metrics.precision,
              "recall": lambda r: r.metrics.recall, "f1": lambda r: r.metrics.f1,
              "mcc": lambda r: r.metrics.mcc}
    means = {name: _mean_over_seeds(records, fn) for name, fn in fields.items()}
    n_dr = max((len(r.metrics.detection_rate) for r in records if r.ok), default=0)
    dr = [_mean_over_seeds(records, lambda r, i=i: r.metrics.detection_rate[i]
                           if i < len(r.metrics.detection_rate) else None) for i in range(n_dr)]

    def row(key, role, tie=False):
        out = {"dataset": key[0], "classifier": key[1], "spec": key[2], "role": role}
        out.update({name: means[name][key] for name in fields})
        out["detection_rate"] = [d[key] for d in dr]
        out["tie"] = tie
        return out

    groups: dict = {}
    for key in means["mcc"]:
        groups.setdefault(key[:2], []).append(key[2])
    rows = []
    for ds, clf in sorted(groups, key=lambda k: (k[0], CLASSIFIERS.index(k[1]))):
        specs = sorted(groups[(ds, clf)], key=order.__getitem__)
        scored = [(means["mcc"][(ds, clf, s)], s) for s in specs if means["mcc"][(ds, clf, s)] is not None]
        if BASELINE in specs:
            rows.append(row((ds, clf, BASELINE), "baseline"))
        if scored:
            top = max(v for v, _ in scored)
            winners = [s for v, s in scored if v == top]
            rows.append(row((ds, clf, winners[0]), "best", tie=len(winners) > 1))
    for ds in {r["dataset"] for r in rows}:
        best = [r for r in rows if r["dataset"] == ds and r["role"] == "best"]
        if best:
            top = max(r["mcc"] for r in best)
            for r in best:
                r["dataset_best"] = r["mcc"] == top
    for r in rows:
        r.setdefault("dataset_best", False)
    return rows


def directional_summary(deltas: dict) -> dict:
    """Share of specs with negative delta per classifier and mean NM-3 delta."""
    out = {}
    for (ds, clf), by_spec in deltas.items():
        vals = [v for s, v in by_spec.items() if s != BASELINE and v is not None]
        nm3 = [v for s, v in by_spec.items() if s.endswith("+NM-3") and v is not None]
        out.setdefault(ds, {})[clf] = {
            "fraction_negative": float(np.mean([v < 0 for v in vals])) if vals else None,
            "mean_delta": float(np.mean(vals)) if vals else None,
            "nm3_mean_delta": float(np.mean(nm3)) if nm3 else None,
        }
    return out
