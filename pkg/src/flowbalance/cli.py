"""Command line entry point: ``flowbalance <command> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .classifiers import CLASSIFIERS, ClassifierSpec, fit_classifier, load_classifier, save_classifier
from .data import builtin_schema, ingest_csv, load_schema, load_table, save_table, subsample
from .generative import KINDS, generate, load_model, make_config, train_model
from .metrics import confusion, evaluate


def _schema(text):
    return load_schema(text) if text.endswith(".json") else builtin_schema(text)


def _out(args, default):
    out = Path(args.out or default)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> dict:
    return json.loads(Path(args.config).read_text()) if args.config else {}


def cmd_ingest(args):
    if args.surrogate:
        from .surrogate import bot_iot_table

        table, clipped = bot_iot_table(args.cap, args.seed)
    else:
        if not args.input:
            raise SystemExit("ingest: INPUT csv or --surrogate required")
        table, clipped = ingest_csv(args.input, _schema(args.schema))
        if args.cap:
            table = subsample(table, args.cap, args.seed)
    out = save_table(table, _out(args, "table.csv"))
    print(json.dumps({"out": str(out), "rows": table.n_rows, "counts": table.counts().tolist(),
                      "class_names": list(table.class_names), "clipped": clipped}))


def cmd_resample(args):
    from .generative import GeneratorRegistry
    from .resample import ResampleSpec, apply_spec

    cfg = _config(args)
    table = load_table(args.table)
    spec = ResampleSpec.parse(args.spec, cfg.get("resample_params"))
    out_table, prov = apply_spec(table, spec, GeneratorRegistry(cfg.get("generator_overrides")), args.seed)
    out = save_table(out_table, _out(args, "resampled.csv"))
    out.with_name(out.stem + ".provenance.json").write_text(prov.to_json() + "\n")
    print(prov.to_json())


def cmd_train(args):
    table = load_table(args.table)
    if args.classifier in CLASSIFIERS:
        spec = ClassifierSpec(args.classifier, seed=args.seed)
    else:
        spec = ClassifierSpec.load(args.classifier)
    model = fit_classifier(spec, table)
    out = _out(args, "model.json")
    save_classifier(model, out)
    print(json.dumps({"out": str(out), "kind": model.kind}))


def cmd_evaluate(args):
    model = load_classifier(args.model)
    table = load_table(args.table)
    cm = confusion(table.labels, model.predict(table.features), table.n_classes, table.class_names)
    doc = {**evaluate(cm).to_dict(), "confusion": cm.counts.tolist(), "class_names": list(table.class_names)}
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        _out(args, "metrics.json").write_text(text + "\n")
    print(text)


def cmd_generate(args):
    names = None
    if args.checkpoint and Path(args.checkpoint).exists() and not args.table:
        model = load_model(args.checkpoint)
    else:
        if not args.table:
            raise SystemExit("generate: TABLE required to train a model")
        table = load_table(args.table)
        names = list(table.feature_names)
        overrides = _config(args).get("generator_overrides", {}).get(args.model)
        model = train_model(args.model, table, make_config(args.model, overrides, args.seed))
        if args.checkpoint:
            model.save(args.checkpoint)
    rows = generate(model, args.class_id, args.count, args.seed)
    out = _out(args, "generated.csv")
    frame = pd.DataFrame(rows, columns=names or [f"f{i}" for i in range(rows.shape[1])])
    frame["label"] = np.full(rows.shape[0], args.class_id)
    frame["synthetic"] = 1
    frame.to_csv(out, index=False)
    print(json.dumps({"out": str(out), "rows": int(rows.shape[0])}))


def _default_grid_config():
    return {"datasets": [{"name": "NF-BoT-IoT", "schema": "nf_bot_iot", "cap": 2000, "surrogate": True}]}


def cmd_grid(args):
    from .bench import GridConfig, run_grid
    from .report import report

    doc = _config(args) or _default_grid_config()
    if args.seed is not None:
        doc["seeds"] = [args.seed]
    if args.jobs is not None:
        doc["jobs"] = args.jobs
    config = GridConfig.from_dict(doc)
    out = Path(args.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    events = []

    def progress(done, total):
        print(f"\r{done}/{total} units", end="", file=sys.stderr, flush=True)

    records, info = run_grid(config, events=events.append, progress=progress)
    print(file=sys.stderr)
    with open(out / "events.jsonl", "w") as fh:
        for e in events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")
    written = report(records, out, info, config.to_dict())
    print(json.dumps({"records": len(records), "failed": sum(not r.ok for r in records),
                      "files": [str(p) for p in written]}, indent=2))


def cmd_report(args):
    from .report import read_records, report

    records = read_records(args.records)
    info = None
    summary = Path(args.records).with_name("summary.json")
    if summary.exists():
        info = json.loads(summary.read_text()).get("datasets") or None
    written = report(records, args.out or "report", info)
    print(json.dumps({"files": [str(p) for p in written]}, indent=2))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--jobs", type=int, default=None, help="worker processes for the grid")
    common.add_argument("--out", help="output file or directory")

    p = argparse.ArgumentParser(prog="flowbalance", parents=[common],
                                description="Resampling benchmark for imbalanced NetFlow classification.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="normalize a NetFlow CSV into a FlowTable")
    s.add_argument("input", nargs="?")
    s.add_argument("--schema", default="nf_bot_iot", help="builtin schema name or JSON path")
    s.add_argument("--cap", type=int, default=None, help="per-class row cap")
    s.add_argument("--surrogate", action="store_true", help="use the synthetic NF-BoT-IoT stand-in")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("resample", parents=[common], help="apply one OVER+UNDER spec to a FlowTable")
    s.add_argument("table")
    s.add_argument("--spec", required=True, help='e.g. "SMOTE+ENN" or "C-DDPM+NCR"')
    s.set_defaults(func=cmd_resample)

    s = sub.add_parser("train", parents=[common], help="fit a classifier on a FlowTable")
    s.add_argument("table")
    s.add_argument("--classifier", required=True, help=f"one of {', '.join(CLASSIFIERS)} or a spec JSON")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="score a saved classifier on a FlowTable")
    s.add_argument("model")
    s.add_argument("table")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("generate", parents=[common], help="sample rows from a conditional generator")
    s.add_argument("table", nargs="?")
    s.add_argument("--model", choices=sorted(KINDS), required=True)
    s.add_argument("--class-id", type=int, required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--checkpoint", help="load from / save to this checkpoint")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("grid", parents=[common], help="run the experiment grid and write the report")
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("report", parents=[common], help="rebuild report files from records.jsonl")
    s.add_argument("records")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is None and args.command != "grid":
        args.seed = 0
    args.func(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
