"""Result files and figures for a finished grid.

Everything except ``timings.csv`` is a pure function of the records, so two
runs with the same config produce byte-identical outputs.  SVGs are written
with a fixed hash salt and no date stamp.
"""
from __future__ import annotations

import csv
import json
import statistics
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap, Normalize  # noqa: E402

from .bench import BASELINE, ResultRecord, best_per_model, delta_matrix, directional_summary  # noqa: E402
from .classifiers import CLASSIFIERS  # noqa: E402
from .metrics import CSV_COLUMNS, MAX_DR_COLUMNS  # noqa: E402
from .resample import OVERSAMPLERS, UNDERSAMPLERS, ResampleSpec, all_specs  # noqa: E402

# odd LUT size puts an entry exactly on the centre, so a delta of 0 is pure white
DELTA_CMAP = LinearSegmentedColormap.from_list(
    "delta", [(0.0, "#b2182b"), (0.5, "#ffffff"), (1.0, "#2166ac")], N=257)
NA_COLOR = "#d9d9d9"

plt.rcParams["svg.hashsalt"] = "flowbalance"
plt.rcParams["svg.fonttype"] = "none"


def delta_norm(values) -> Normalize:
    vals = [abs(v) for v in values if v is not None]
    bound = max(vals) if vals and max(vals) > 0 else 1.0
    return Normalize(-bound, bound)


def delta_color(value, norm: Normalize):
    """RGBA for one delta; ``None`` (failed cell) gets the NA grey."""
    if value is None:
        return matplotlib.colors.to_rgba(NA_COLOR)
    return DELTA_CMAP(norm(value))


def quartile_summary(values) -> tuple[float, float, float, float, float]:
    """``(min, q1, median, q3, max)`` with the inclusive quartile method."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("no values")
    if len(vals) == 1:
        return (vals[0],) * 5
    q1, med, q3 = statistics.quantiles(vals, n=4, method="inclusive")
    return vals[0], q1, med, q3, vals[-1]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _heat_cells(ax, grid, norm, row_labels, col_labels, fontsize=6):
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            ax.add_patch(plt.Rectangle((j, i), 1, 1, facecolor=delta_color(v, norm),
                                       hatch=None if v is not None else "///", edgecolor="#ffffff",
                                       linewidth=0.5))
            label = "NA" if v is None else f"{v:+.1f}"
            ax.text(j + 0.5, i + 0.5, label, ha="center", va="center", fontsize=fontsize)
    ax.set_xlim(0, len(col_labels))
    ax.set_ylim(len(row_labels), 0)
    ax.set_xticks(np.arange(len(col_labels)) + 0.5)
    ax.set_xticklabels(col_labels, fontsize=7, rotation=45, ha="right")
    ax.set_yticks(np.arange(len(row_labels)) + 0.5)
    ax.set_yticklabels(row_labels, fontsize=6)


def _colorbar(fig, ax, norm):
    sm = plt.cm.ScalarMappable(norm=norm, cmap=DELTA_CMAP)
    fig.colorbar(sm, ax=ax, label="delta MCC (pp)")


def plot_delta_heatmap(deltas: dict, dataset: str, path):
    classifiers = [c for c in CLASSIFIERS if (dataset, c) in deltas]
    specs = [str(s) for s in all_specs() if any(str(s) in deltas[(dataset, c)] for c in classifiers)]
    grid = [[deltas[(dataset, c)].get(s) for c in classifiers] for s in specs]
    norm = delta_norm([v for row in grid for v in row])
    fig, ax = plt.subplots(figsize=(6, 0.2 * len(specs) + 1.5))
    _heat_cells(ax, grid, norm, specs, classifiers)
    ax.set_title(f"{dataset}: MCC minus {BASELINE}", fontsize=9)
    _colorbar(fig, ax, norm)
    fig.tight_layout()
    _save(fig, path)


def _bxp_stats(groups, labels):
    stats = []
    for label, vals in zip(labels, groups):
        if not vals:
            continue
        lo, q1, med, q3, hi = quartile_summary(vals)
        stats.append({"label": label, "whislo": lo, "q1": q1, "med": med, "q3": q3, "whishi": hi,
                      "fliers": []})
    return stats


def plot_dr_boxplot(records, dataset, class_names, path, title=None):
    groups = _dr_groups(records, dataset, len(class_names))
    fig, ax = plt.subplots(figsize=(0.6 * len(class_names) + 2, 3))
    stats = _bxp_stats(groups, [f"c{i}" for i in range(len(class_names))])
    if stats:
        ax.bxp(stats, showfliers=False)
    ax.set_ylim(-2, 102)
    ax.set_ylabel("detection rate (%)")
    ax.set_title(title or f"{dataset}: per-class detection rate over all runs", fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def plot_model_panel(records, deltas, dataset, classifier, class_names, path):
    """Over x under delta grid for one classifier next to its per-class DR boxplot."""
    by_spec = deltas.get((dataset, classifier), {})
    grid = [[by_spec.get(str(ResampleSpec(o, u))) for u in UNDERSAMPLERS] for o in OVERSAMPLERS]
    norm = delta_norm([v for row in grid for v in row])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.6), gridspec_kw={"width_ratios": [1.2, 1]})
    _heat_cells(ax1, grid, norm, [str(ResampleSpec(o)).split("+")[0] for o in OVERSAMPLERS],
                [str(ResampleSpec("None", u)).split("+")[1] for u in UNDERSAMPLERS], fontsize=7)
    ax1.set_title(f"{dataset} / {classifier}: delta MCC", fontsize=9)
    _colorbar(fig, ax1, norm)
    mine = [r for r in records if r.classifier == classifier]
    stats = _bxp_stats(_dr_groups(mine, dataset, len(class_names)),
                       [f"c{i}" for i in range(len(class_names))])
    if stats:
        ax2.bxp(stats, showfliers=False)
    ax2.set_ylim(-2, 102)
    ax2.set_title("per-class detection rate over specs", fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def _dr_groups(records, dataset, n_classes):
    groups = [[] for _ in range(n_classes)]
    for r in records:
        if r.dataset == dataset and r.ok:
            for i, v in enumerate(r.metrics.detection_rate[:n_classes]):
                groups[i].append(v)
    return groups


def _class_names(records, info, dataset):
    if info and dataset in info:
        return list(info[dataset]["class_names"])
    n = max((len(r.metrics.detection_rate) for r in records if r.dataset == dataset and r.ok), default=0)
    return [f"class {i}" for i in range(n)]


def write_records(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(timings=False), sort_keys=True) + "\n")


def read_records(path) -> list[ResultRecord]:
    with open(path) as fh:
        return [ResultRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def report(records, out_dir, info: dict | None = None, config: dict | None = None) -> list[Path]:
    """Write every result artefact to ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(records)
    written = []

    def path(name):
        p = out / name
        written.append(p)
        return p

    write_records(records, path("records.jsonl"))
    header = ["ds", "model", "sampling", "seed", "status"] + CSV_COLUMNS + [
        "class_counts_after_resample", "test_hash", "warnings", "error"]
    rows = []
    for r in records:
        m = r.metrics.csv_row() if r.ok else {c: None for c in CSV_COLUMNS}
        counts = " ".join(str(c) for c in r.class_counts_after_resample or [])
        rows.append([r.dataset, r.classifier, r.spec, r.seed, r.status] + [m[c] for c in CSV_COLUMNS]
                    + [counts, r.test_hash, "; ".join(r.warnings), r.error])
    _write_csv(path("results.csv"), header, rows)
    _write_csv(path("timings.csv"), ["ds", "model", "sampling", "seed", "resample_ms", "train_ms", "predict_ms"],
               [[r.dataset, r.classifier, r.spec, r.seed, r.timings.get("resample_ms"),
                 r.timings.get("train_ms"), r.timings.get("predict_ms")] for r in records])

    deltas = delta_matrix(records)
    _write_csv(path("delta_mcc.csv"), ["ds", "model", "sampling", "delta_mcc"],
               [[ds, clf, spec, v] for (ds, clf), by_spec in deltas.items() for spec, v in by_spec.items()])

    best = best_per_model(records)
    t2_header = ["ds", "model", "sampling", "role", "Acc", "Prec", "Rec", "F1", "MCC"] + [
        f"c{i}" for i in range(MAX_DR_COLUMNS)] + ["tie", "dataset_best"]
    t2_rows = []
    for b in best:
        dr = list(b["detection_rate"]) + [None] * (MAX_DR_COLUMNS - len(b["detection_rate"]))
        t2_rows.append([b["dataset"], b["classifier"], b["spec"], b["role"], b["accuracy"], b["precision"],
                        b["recall"], b["f1"], b["mcc"]] + dr[:MAX_DR_COLUMNS] + [b["tie"], b["dataset_best"]])
    _write_csv(path("table2.csv"), t2_header, t2_rows)

    datasets = list(dict.fromkeys(r.dataset for r in records))
    dist_rows = []
    for ds in datasets:
        names = _class_names(records, info, ds)
        for i, vals in enumerate(_dr_groups(records, ds, len(names))):
            if vals:
                dist_rows.append([ds, i, names[i], len(vals), *quartile_summary(vals)])
    _write_csv(path("dr_distribution.csv"), ["ds", "class_id", "class_name", "n", "min", "q1", "median",
                                             "q3", "max"], dist_rows)

    for ds in datasets:
        slug = ds.lower().replace(" ", "_").replace("-", "_")
        names = _class_names(records, info, ds)
        plot_delta_heatmap(deltas, ds, path(f"delta_mcc_{slug}.svg"))
        plot_dr_boxplot(records, ds, names, path(f"dr_boxplot_{slug}.svg"))
        for clf in CLASSIFIERS:
            if (ds, clf) in deltas:
                plot_model_panel(records, deltas, ds, clf, names, path(f"model_{slug}_{clf.lower()}.svg"))

    summary = {
        "n_records": len(records),
        "n_failed": sum(not r.ok for r in records),
        "datasets": info or {},
        "config": config or {},
        "test_hash_constant": all(
            len({r.test_hash for r in records if (r.dataset, r.classifier, r.seed) == key}) == 1
            for key in {(r.dataset, r.classifier, r.seed) for r in records}),
        "delta_mcc": {f"{ds}|{clf}": by_spec for (ds, clf), by_spec in deltas.items()},
        "best_per_model": best,
        "directional": directional_summary(deltas),
    }
    p = path("summary.json")
    p.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return written
