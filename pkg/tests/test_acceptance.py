"""Acceptance criteria, one test each.  Every test writes a PASS/FAIL line to the terminal.

Set FLOWBALANCE_BOT_IOT_CSV to the NF-BoT-IoT NetFlow CSV to run the grid on
real data; otherwise the in-repo surrogate is used.
"""
import hashlib
import json
import os
import time

import numpy as np
import pytest
from conftest import blobs, make_table
from test_classifiers import xor_table
from test_metrics import exhaustive, mcc_covariance
from test_nn import ACT_COMBOS, fd_input, fd_params, rel_err

import oracles
from flowbalance.bench import GridConfig, audit_test_hashes, delta_matrix, directional_summary, run_grid
from flowbalance.classifiers import CLASSIFIERS, ClassifierSpec, fit_classifier, fit_gbt
from flowbalance.data import FlowTable, stratified_split
from flowbalance.generative import CddpmConfig, GeneratorRegistry, Schedule, gradient_penalty
from flowbalance.metrics import ConfusionMatrix, accuracy, mcc, weighted_metrics
from flowbalance.nn import NetSpec, Network, gaussian_kl, mse, softmax_cross_entropy
from flowbalance.report import report
from flowbalance.resample import (
    EmptyResult, adasyn, enn_clean, nearmiss3, random_oversample, random_undersample, smote, tomek_clean,
)

pytestmark = pytest.mark.acceptance

_FIRST: dict = {}


@pytest.fixture
def say(request):
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(n, ok, detail):
        line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        else:
            print(line)
    return emit


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=repr).encode()).hexdigest()


def first(n, fn):
    if n not in _FIRST:
        _FIRST[n] = fn()
    return _FIRST[n]


# --- 1: resampler oracles ----------------------------------------------------

def _cleaned(fn, table):
    try:
        return ("table", fn(table))
    except EmptyResult as exc:
        return ("empty", exc.kept.tolist())


def _cleaner_ok(fn, table, ref):
    kind, out = _cleaned(fn, table)
    if kind == "empty":
        return out == ref
    return out.equals(table.take(ref))


def _synthetic_ok(train, out, k, bases=None):
    """Each synthetic row sits on a segment from its base point to one of the base's same-class kNN."""
    if not out.take(np.arange(train.n_rows)).equals(train):
        return False, 0.0
    worst, pos = 0.0, train.n_rows
    for c, deficit in enumerate(train.counts().max() - train.counts()):
        Xc = train.features[train.labels == c]
        for r in range(pos, pos + deficit):
            if out.labels[r] != c:
                return False, np.inf
            if Xc.shape[0] == 1:
                res = float(np.abs(out.features[r] - Xc[0]).max())
            else:
                ke = min(k, Xc.shape[0] - 1)
                starts = range(Xc.shape[0]) if bases is None else [bases[c][r - pos]]
                res = min(oracles.segment_residual(out.features[r], Xc[i], Xc[j])
                          for i in starts for j in oracles.knn(Xc, i, ke))
            worst = max(worst, res)
        pos += deficit
    return pos == out.n_rows, worst


def _adasyn_bases(train, k):
    y = train.labels.tolist()
    out = {}
    for c, deficit in enumerate(train.counts().max() - train.counts()):
        if deficit and (train.labels == c).sum() > 1:
            w = oracles.adasyn_ratios(train.features, y, c, k)
            out[c] = np.repeat(np.arange(w.size), oracles.largest_remainder(int(deficit), list(w)))
    return out


def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    failures, worst, outputs = [], 0.0, []
    for i in range(200):
        t = oracles.random_table(rng)
        X, y = t.features, t.labels.tolist()
        for name, fn, ref in (("Tomek", tomek_clean, oracles.tomek_keep(X, y)),
                              ("ENN", lambda x: enn_clean(x, 3), oracles.enn_keep(X, y)),
                              ("NM-3", nearmiss3, oracles.nm3_keep(X, y))):
            if not _cleaner_ok(fn, t, ref):
                failures.append(f"table {i}: {name}")
            outputs.append(ref)
        for name, fn, bases in (("SMOTE", smote, None), ("ADASYN", adasyn, _adasyn_bases(t, 5))):
            out = fn(t, 5, i)
            ok, res = _synthetic_ok(t, out, 5, bases)
            worst = max(worst, res)
            if not ok or res >= 1e-9:
                failures.append(f"table {i}: {name} residual {res:.2e}")
            outputs.append(out.features.round(12).tolist())
    return {"failures": failures, "worst": worst, "seconds": time.perf_counter() - t0,
            "digest": digest(outputs)}


def test_criterion_1_resampler_oracles(say):
    r = first(1, criterion_1)
    ok = not r["failures"] and r["seconds"] < 60
    say(1, ok, f"200 tables, {len(r['failures'])} mismatches, max convex residual {r['worst']:.1e}, "
               f"{r['seconds']:.1f}s (limit 60s)")
    assert not r["failures"], r["failures"][:5]
    assert r["seconds"] < 60


# --- 2: balance postconditions -----------------------------------------------

def criterion_2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    y = np.repeat([0, 1, 2], [100, 40, 10])
    t = FlowTable(rng.random((150, 4)), y, ("A", "B", "C"))
    reg = GeneratorRegistry()
    over = {"ROS": lambda: random_oversample(t, 0), "SMOTE": lambda: smote(t, 5, 0),
            "ADASYN": lambda: adasyn(t, 5, 0)}
    over.update({k: (lambda k=k: reg[k](t, 0)) for k in ("CVAE", "CWGAN", "CDDPM")})
    counts, outs = {}, {}
    for name, fn in over.items():
        out = fn()
        counts[name] = out.counts().tolist()
        outs[name] = out.features.round(12).tolist()
        assert out.features.min() >= 0 and out.features.max() <= 1
    counts["RUS"] = random_undersample(t, 0).counts().tolist()
    return {"counts": counts, "seconds": time.perf_counter() - t0, "digest": digest([counts, outs])}


def test_criterion_2_balance(say):
    r = first(2, criterion_2)
    expected = {k: [100, 100, 100] for k in ("ROS", "SMOTE", "ADASYN", "CVAE", "CWGAN", "CDDPM")}
    expected["RUS"] = [10, 10, 10]
    ok = r["counts"] == expected and r["seconds"] < 300
    say(2, ok, f"counts {r['counts']}, {r['seconds']:.1f}s (limit 300s)")
    assert r["counts"] == expected
    assert r["seconds"] < 300


# --- 3: gradient checks ------------------------------------------------------

def criterion_3():
    errs = {}
    rng = np.random.default_rng(3)
    for acts in ACT_COMBOS:
        net = Network(NetSpec((4, 5, 3), acts, seed=11))
        x = rng.standard_normal((6, 4))
        up = rng.standard_normal((6, 3))
        net.store.zero_grad()
        _, cache = net.forward(x)
        dx = net.backward(cache, up)
        num = fd_params(net, lambda: float(np.sum(net(x) * up)))
        errs[f"{acts} params"] = max(rel_err(net.store.grads[k], num[k]) for k in num)
        errs[f"{acts} input"] = rel_err(dx, fd_input(lambda z: float(np.sum(net(z) * up)), x.copy()))
        critic = Network(NetSpec((3, 6, 1), acts, seed=12))
        xc = rng.random((5, 3))
        critic.store.zero_grad()
        _, adj, pc = gradient_penalty(critic, xc, 2, 10.0)
        critic.penalty_backward(pc, adj)
        num = fd_params(critic, lambda: gradient_penalty(critic, xc, 2, 10.0)[0])
        errs[f"{acts} penalty"] = max(rel_err(critic.store.grads[k], num[k]) for k in num)
    a, b = rng.random((4, 3)), rng.random((4, 3))
    errs["mse"] = rel_err(mse(a, b)[1], fd_input(lambda z: mse(z, b)[0], a.copy()))
    logits, ids = rng.standard_normal((5, 4)), np.array([0, 3, 1, 1, 2])
    errs["cross-entropy"] = rel_err(softmax_cross_entropy(logits, ids)[1],
                                    fd_input(lambda z: softmax_cross_entropy(z, ids)[0], logits.copy()))
    mu, lv = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    _, dmu, dlv = gaussian_kl(mu, lv)
    errs["kl mu"] = rel_err(dmu, fd_input(lambda z: gaussian_kl(z, lv)[0], mu.copy()))
    errs["kl logvar"] = rel_err(dlv, fd_input(lambda z: gaussian_kl(mu, z)[0], lv.copy()))
    critic = Network(NetSpec((2, 1), ("identity",)))
    critic.W(0)[:, 0] = [2.0, 0.5]
    gp = gradient_penalty(critic, np.hstack([rng.random((8, 1)), np.ones((8, 1))]), 1, 10.0)[0]
    return {"errs": errs, "gp": gp, "digest": digest([errs, gp])}


def test_criterion_3_gradients(say):
    r = first(3, criterion_3)
    worst = max(r["errs"].values())
    ok = worst < 1e-4 and abs(r["gp"] - 10.0) <= 1e-9
    say(3, ok, f"{len(r['errs'])} gradient checks, max rel err {worst:.1e} (limit 1e-4); "
               f"penalty for D(x)=2x is {r['gp']!r}")
    assert worst < 1e-4, r["errs"]
    assert abs(r["gp"] - 10.0) <= 1e-9


# --- 4: DDPM schedule --------------------------------------------------------

def criterion_4():
    cfg = CddpmConfig()
    s = Schedule.linear(cfg.steps, cfg.beta_start, cfg.resolved_beta_end)
    n, x0 = 10_000, 0.6
    rng = np.random.default_rng(4)
    ab = s.alpha_bars[-1]
    mean, std = np.sqrt(ab) * x0, np.sqrt(1 - ab)
    xs = s.q_sample(np.full(n, x0), s.steps, rng.standard_normal(n))
    z_mean = abs(xs.mean() - mean) / (std / np.sqrt(n))
    z_std = abs(xs.std() - std) / (std / np.sqrt(2 * n))
    return {"monotone": bool(np.all(np.diff(s.alpha_bars) < 0)), "abar_T": float(ab),
            "z_mean": float(z_mean), "z_std": float(z_std),
            "digest": digest([s.alpha_bars.tolist(), xs[:100].tolist()])}


def test_criterion_4_schedule(say):
    r = first(4, criterion_4)
    ok = r["monotone"] and r["abar_T"] < 0.05 and r["z_mean"] <= 3 and r["z_std"] <= 3
    say(4, ok, f"alpha_bar monotone={r['monotone']}, alpha_bar_T={r['abar_T']:.2e} (< 0.05), "
               f"x_T mean/std within {r['z_mean']:.2f}/{r['z_std']:.2f} SE (limit 3)")
    assert ok


# --- 5: metrics --------------------------------------------------------------

def criterion_5():
    worst_mcc, worst_rec, n = 0.0, 0.0, 0
    for counts in exhaustive():
        cm = ConfusionMatrix(counts)
        worst_mcc = max(worst_mcc, abs(mcc(cm) - mcc_covariance(counts)) / 100)
        worst_rec = max(worst_rec, abs(weighted_metrics(cm)[1] - accuracy(cm)) / 100)
        n += 1
    fixture = ConfusionMatrix(np.array([[2, 1], [1, 2]]))
    return {"n": n, "mcc_err": worst_mcc, "recall_err": worst_rec, "mcc": mcc(fixture),
            "f1": weighted_metrics(fixture)[2], "digest": digest([n, mcc(fixture), weighted_metrics(fixture)])}


def test_criterion_5_metrics(say):
    r = first(5, criterion_5)
    ok = (r["mcc_err"] <= 1e-12 and r["recall_err"] <= 1e-12 and abs(r["mcc"] - 100 / 3) <= 1e-12
          and abs(r["f1"] - 200 / 3) <= 1e-12)
    say(5, ok, f"{r['n']} matrices, MCC err {r['mcc_err']:.1e}, recall-accuracy err {r['recall_err']:.1e}; "
               f"fixture MCC {r['mcc']:.4f}%, weighted F1 {r['f1']:.4f}%")
    assert ok


# --- 6: classifiers ----------------------------------------------------------

def criterion_6():
    t0 = time.perf_counter()
    X, y = blobs(1000, 3, seed=0)
    split = stratified_split(make_table(X, y), 0.8, 0)
    acc, preds = {}, {}
    for kind in CLASSIFIERS:
        model = fit_classifier(ClassifierSpec(kind, seed=0), split.train)
        p = model.predict(split.test.features)
        acc[kind] = float(np.mean(p == split.test.labels))
        preds[kind] = p.tolist()
    xor = xor_table()
    g = fit_gbt(xor, n_rounds=20, max_depth=2, learning_rate=0.3)
    xor_acc = float(np.mean(g.predict(xor.features) == xor.labels))
    return {"acc": acc, "xor": xor_acc, "seconds": time.perf_counter() - t0,
            "digest": digest([preds, g.predict(xor.features).tolist()])}


def test_criterion_6_classifiers(say):
    r = first(6, criterion_6)
    ok = min(r["acc"].values()) >= 0.95 and r["xor"] == 1.0 and r["seconds"] < 120
    say(6, ok, "held-out accuracy " + ", ".join(f"{k} {v:.3f}" for k, v in r["acc"].items())
        + f"; GBT XOR train accuracy {r['xor']:.3f}; {r['seconds']:.1f}s (limit 120s)")
    assert min(r["acc"].values()) >= 0.95, r["acc"]
    assert r["xor"] == 1.0
    assert r["seconds"] < 120


# --- 7/8: end-to-end grid ----------------------------------------------------

def grid_config():
    ds = {"name": "NF-BoT-IoT", "schema": "nf_bot_iot", "cap": 2000, "surrogate": True}
    if os.environ.get("FLOWBALANCE_BOT_IOT_CSV"):
        ds["path"] = os.environ["FLOWBALANCE_BOT_IOT_CSV"]
    return GridConfig.from_dict({"datasets": [ds], "seeds": [0]})


def run_full_grid(out_dir):
    t0 = time.perf_counter()
    config = grid_config()
    records, info = run_grid(config)
    files = report(records, out_dir, info, config.to_dict())
    return {"records": records, "info": info, "files": files, "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def grid_run(tmp_path_factory):
    return run_full_grid(tmp_path_factory.mktemp("grid_a"))


def test_criterion_7_end_to_end_grid(say, grid_run):
    r = grid_run
    names = [p.name for p in r["files"]]
    panels = [n for n in names if n.startswith("model_") and n.endswith(".svg")]
    hashes_ok = all(len(h) == 1 for h in audit_test_hashes(r["records"]).values())
    n_failed = sum(not rec.ok for rec in r["records"])
    source = r["info"]["NF-BoT-IoT"]["source"]
    ok = (len(r["records"]) == 252 and "table2.csv" in names and len(panels) == 6 and hashes_ok
          and r["seconds"] < 1800)
    say(7, ok, f"{len(r['records'])} records ({n_failed} failed) from {source}, table2.csv written, "
               f"{len(panels)} per-classifier heatmap+boxplot SVGs, test hash constant={hashes_ok}, "
               f"{r['seconds']:.0f}s (limit 1800s)")
    assert len(r["records"]) == 252
    assert "table2.csv" in names and "results.csv" in names
    assert len(panels) == 6
    assert hashes_ok
    assert r["seconds"] < 1800


def test_criterion_8_directional_report(say, grid_run):
    summary = directional_summary(delta_matrix(grid_run["records"]))["NF-BoT-IoT"]
    parts = [f"{clf}: {s['fraction_negative']:.2f} of specs below baseline, NM-3 mean delta "
             f"{s['nm3_mean_delta']:+.2f}pp" for clf, s in summary.items()]
    say(8, True, "reported only; " + "; ".join(parts))


# --- 9: determinism ----------------------------------------------------------

RERUN = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6}


def test_criterion_9_determinism(say, grid_run, tmp_path):
    mismatched = []
    for n, fn in RERUN.items():
        if first(n, fn)["digest"] != fn()["digest"]:
            mismatched.append(f"criterion {n}")
    again = run_full_grid(tmp_path / "grid_b")
    compared = 0
    for p in grid_run["files"]:
        if p.name == "timings.csv":
            continue
        compared += 1
        if p.read_bytes() != (tmp_path / "grid_b" / p.name).read_bytes():
            mismatched.append(p.name)
    ok = not mismatched
    say(9, ok, f"criteria 1-6 outputs and {compared} grid files (CSV/JSON/SVG, timings excluded) "
               f"{'byte-identical' if ok else 'differ: ' + ', '.join(mismatched)}")
    assert not mismatched
