import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowbalance.data import FlowTable
from flowbalance.neighbors import NeighborIndex
from flowbalance.resample import (
    EmptyResult, ResampleError, ResampleSpec, SingleClass, adasyn, adasyn_weights, all_specs, apply_spec,
    condensed_nn, enn_clean, largest_remainder, ncr_clean, nearmiss3, random_oversample,
    random_undersample, smote, tomek_clean, undersample_with_fallback,
)

import oracles
from conftest import make_table


def col(*groups):
    """1-D table from per-class value lists."""
    X = [[v] for g in groups for v in g]
    y = [c for c, g in enumerate(groups) for _ in g]
    return make_table(X, y)


def rows_of(table):
    return table.features[:, 0].tolist()


def clean(fn, table):
    """``(output table or None, kept rows if a class was emptied)``."""
    try:
        return fn(table), None
    except EmptyResult as exc:
        return None, exc.kept.tolist()


def matches(fn, table, ref):
    out, kept = clean(fn, table)
    if out is None:
        return kept == ref and len(set(table.labels[ref].tolist())) < table.n_classes
    return out.equals(table.take(ref))


# ---- neighbor index -------------------------------------------------------

def test_neighbor_order_and_ties():
    X = np.array([[0.0], [0.5], [0.5], [1.0], [0.0]])
    idx, dist = NeighborIndex(X).query(3, np.array([[0.5]]))
    assert idx.tolist() == [[1, 2, 0]]
    assert np.allclose(dist, [[0, 0, 0.5]])
    idx, _ = NeighborIndex(X).query(2, self_exclude=True)
    assert idx[0].tolist() == [4, 1]
    assert all(i not in row for i, row in enumerate(idx))
    with pytest.raises(ValueError):
        NeighborIndex(X).query(5, self_exclude=True)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_neighbor_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    t = oracles.random_table(rng)
    k = int(rng.integers(1, t.n_rows))
    idx, _ = NeighborIndex(t.features).query(k, self_exclude=True)
    for i in range(t.n_rows):
        assert idx[i].tolist() == oracles.knn(t.features, i, k)


# ---- specs ----------------------------------------------------------------

def test_spec_grid_and_strings():
    specs = all_specs()
    assert len(specs) == 42 and len({str(s) for s in specs}) == 42
    assert str(specs[0]) == "None+None"
    assert str(ResampleSpec("CDDPM", "NCR")) == "C-DDPM+NCR"
    assert ResampleSpec.parse("c-ddpm+ncr") == ResampleSpec("CDDPM", "NCR")
    assert ResampleSpec.parse("NM-3+NM-3".replace("NM-3+", "None+")).under == "NM3"
    for s in specs:
        assert ResampleSpec.parse(str(s)) == s
    with pytest.raises(ValueError):
        ResampleSpec.parse("SMOTE")
    with pytest.raises(ValueError):
        ResampleSpec("GAN", "None")


# ---- oversamplers -----------------------------------------------------------

def test_ros():
    t = col([0.1, 0.2, 0.3, 0.4, 0.5], [0.8, 0.9])
    out = random_oversample(t, seed=1)
    assert out.counts().tolist() == [5, 5]
    assert out.take(np.arange(7)).equals(t)
    assert set(rows_of(out)[7:]) <= {0.8, 0.9}
    balanced = col([0.1, 0.2], [0.8, 0.9])
    assert random_oversample(balanced).equals(balanced)
    with pytest.raises(SingleClass):
        random_oversample(make_table([[0.1], [0.2]], [0, 0]))


def test_smote_examples():
    t = make_table([[0.3, 0.7]] * 4 + [[0, 0], [1, 1]], [0] * 4 + [1, 1])
    out = smote(t, k=1, seed=5)
    syn = out.features[6:]
    assert syn.shape == (2, 2) and np.all(syn[:, 0] == syn[:, 1])
    t = make_table([[0.1, 0.1]] * 5 + [[0.5, 0.5]] * 2, [0] * 5 + [1] * 2)
    assert np.all(smote(t, seed=2).features[7:] == 0.5)
    rng = np.random.default_rng(0)
    t = FlowTable(rng.random((140, 2)), [0] * 100 + [1] * 40, ("A", "B"))
    out = smote(t, k=5, seed=0)
    assert out.counts().tolist() == [100, 100]
    assert smote(t, 5, 0).equals(out)


def test_smote_single_member_replicates():
    t = col([0.1, 0.2, 0.3], [0.7])
    out = smote(t, seed=0)
    assert rows_of(out)[4:] == [0.7, 0.7]
    assert adasyn(t, seed=0).counts().tolist() == [3, 3]


def test_adasyn_examples():
    # x1 = 0.5 sits among majority rows (r = 1), x2 = 0.95 among minority only (r = 0)
    t = col([0.4, 0.45, 0.55, 0.6, 0.1, 0.15, 0.2, 0.25], [0.5, 0.95, 0.96, 0.97, 0.98, 0.99])
    w = adasyn_weights(t, 1, k=2)
    assert w[0] == 1.0 and np.all(w[1:] == 0)
    out = adasyn(t, k=2, seed=0)
    syn = np.array(rows_of(out)[t.n_rows:])
    assert syn.size == 2 and np.all((syn >= 0.5) & (syn <= 0.96))
    t = col([0.0, 0.01, 0.02, 0.03, 0.04, 0.05], [0.9, 0.91])
    w = adasyn_weights(t, 1, k=1)
    assert w.tolist() == [0.5, 0.5]
    assert largest_remainder(4, w).tolist() == [2, 2]
    balanced = col([0.1, 0.2], [0.8, 0.9])
    assert adasyn(balanced).equals(balanced)


def test_adasyn_all_six_seeded_at_hard_point():
    # x1 = 0.6 has a majority nearest neighbor (r = 1); x2 = 0.61 has x1 (r = 0); deficit 6
    t = col([0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.58, 0.59], [0.6, 0.61])
    assert adasyn_weights(t, 1, k=1).tolist() == [1.0, 0.0]
    syn = np.array(rows_of(adasyn(t, k=1, seed=0))[t.n_rows:])
    assert syn.size == 6 and np.all((syn >= 0.6) & (syn <= 0.61))
    assert np.array_equal(oracles.adasyn_ratios(t.features, t.labels.tolist(), 1, k=1), [1.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 200), st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=8))
def test_largest_remainder_sums(total, weights):
    if sum(weights) <= 0:
        return
    alloc = largest_remainder(total, weights)
    assert alloc.sum() == total and (alloc >= 0).all()
    assert alloc.tolist() == oracles.largest_remainder(total, [float(w) for w in weights])
    exact = total * np.asarray(weights) / np.sum(weights)
    assert np.all(np.abs(alloc - exact) < 1.0)


def check_convex(train, out, k):
    """Every synthetic row lies on a segment from a class member to one of its k same-class NNs."""
    assert out.take(np.arange(train.n_rows)).equals(train)
    for r in range(train.n_rows, out.n_rows):
        c = out.labels[r]
        Xc = train.features[train.labels == c]
        if Xc.shape[0] == 1:
            assert np.array_equal(out.features[r], Xc[0])
            continue
        ke = min(k, Xc.shape[0] - 1)
        best = min(oracles.segment_residual(out.features[r], Xc[i], Xc[j])
                   for i in range(Xc.shape[0]) for j in oracles.knn(Xc, i, ke))
        assert best < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_smote_adasyn_convex_and_balanced(seed):
    rng = np.random.default_rng(seed)
    t = oracles.random_table(rng)
    for fn in (smote, adasyn):
        out = fn(t, 5, seed)
        assert (out.counts() == t.counts().max()).all()
        check_convex(t, out, 5)


# ---- RUS ------------------------------------------------------------------

def test_rus():
    t = col([0.1, 0.2, 0.3, 0.4, 0.5], [0.8, 0.9])
    out = random_undersample(t, seed=4)
    assert out.counts().tolist() == [2, 2]
    assert set(rows_of(out)) <= set(rows_of(t))
    assert random_undersample(t, seed=4).equals(out)
    b = col([0.1, 0.2], [0.8, 0.9])
    assert random_undersample(b).equals(b)


# ---- cleaners ---------------------------------------------------------------

def test_tomek_examples():
    assert rows_of(tomek_clean(col([0.0, 0.1], [0.15, 0.9]))) == [0.0, 0.9]
    sep = col([0.0, 0.01, 0.02], [0.9, 0.91])
    assert tomek_clean(sep).equals(sep)
    dup = col([0.3, 0.0], [0.3, 1.0])
    assert rows_of(tomek_clean(dup)) == [0.0, 1.0]


def test_enn_examples():
    t = col([0.0, 0.05, 0.1], [0.06])
    with pytest.raises(EmptyResult) as exc:
        enn_clean(t, 3)
    assert exc.value.kept.tolist() == [0, 1, 2] and exc.value.empty_classes == (1,)
    fixed, warnings = undersample_with_fallback(t, ResampleSpec("None", "ENN"))
    assert fixed.equals(t) and warnings
    pure = col([0.0, 0.01, 0.02, 0.03], [0.9, 0.91, 0.92, 0.93])
    assert enn_clean(pure).equals(pure)
    # k clamps to n - 1 = 3 on a 4-row fixture
    t4 = col([0.0, 0.1, 0.2], [0.15])
    assert matches(lambda x: enn_clean(x, 10), t4, oracles.enn_keep(t4.features, t4.labels.tolist(), 3))


def test_ncr_examples():
    t = col([0.0, 0.01, 0.02], [0.9])
    assert condensed_nn(t).tolist() == [0, 3]
    with pytest.raises(EmptyResult) as exc:
        ncr_clean(t, 3)
    assert exc.value.kept.tolist() == [] and exc.value.empty_classes == (0, 1)
    out, warnings = undersample_with_fallback(t, ResampleSpec("None", "NCR"))
    assert out.equals(t) and len(warnings) == 1
    single = col([0.2], [0.8])
    with pytest.raises(EmptyResult):
        ncr_clean(single, 1)


def test_nearmiss3_examples():
    t = col([0.0, 0.4, 0.45, 0.55, 0.9], [0.5])
    assert sorted(rows_of(nearmiss3(t))) == [0.4, 0.45, 0.5, 0.55]
    three = col([0.0, 0.4, 0.9], [0.5])
    assert nearmiss3(three).equals(three)
    shared = col([0.0, 0.4, 0.45, 0.55, 0.9], [0.5, 0.5001])
    assert nearmiss3(shared).n_rows == 5


def test_cleaners_keep_rows_unmodified():
    rng = np.random.default_rng(3)
    for _ in range(20):
        t = oracles.random_table(rng)
        originals = {(tuple(x), c) for x, c in zip(t.features.tolist(), t.labels.tolist())}
        for fn in (tomek_clean, enn_clean, ncr_clean, nearmiss3):
            out, _ = clean(fn, t)
            if out is not None:
                assert {(tuple(x), c) for x, c in zip(out.features.tolist(), out.labels.tolist())} <= originals


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_cleaners_match_oracles(seed):
    rng = np.random.default_rng(seed)
    t = oracles.random_table(rng)
    X, y = t.features, t.labels.tolist()
    for fn, ref in ((tomek_clean, oracles.tomek_keep(X, y)), (lambda x: enn_clean(x, 3), oracles.enn_keep(X, y)),
                    (lambda x: ncr_clean(x, 3), oracles.ncr_keep(X, y)), (nearmiss3, oracles.nm3_keep(X, y))):
        assert matches(fn, t, ref)


# ---- composition ------------------------------------------------------------

def test_apply_spec_compositions():
    rng = np.random.default_rng(0)
    t = FlowTable(rng.random((140, 2)), [0] * 100 + [1] * 40, ("A", "B"))
    same, prov = apply_spec(t, ResampleSpec("None", "None"))
    assert same.equals(t) and prov.counts_out == [100, 40]
    out, prov = apply_spec(t, ResampleSpec("SMOTE", "Tomek"), seed=3)
    mid = smote(t, 5, 3)
    assert prov.counts_mid == [100, 100] and prov.n_synthetic == 60
    assert out.equals(mid.take(oracles.tomek_keep(mid.features, mid.labels.tolist())))
    out, _ = apply_spec(t, ResampleSpec("ROS", "RUS"), seed=3)
    assert out.counts().tolist() == [100, 100]
    with pytest.raises(ResampleError):
        apply_spec(t, ResampleSpec("CVAE", "None"))
    assert '"spec": "SMOTE+Tomek"' in apply_spec(t, ResampleSpec("SMOTE", "Tomek"), seed=3)[1].to_json()


def test_determinism():
    rng = np.random.default_rng(9)
    t = oracles.random_table(rng)
    for spec in all_specs():
        if spec.over in ("CVAE", "CWGAN", "CDDPM"):
            continue
        a, pa = apply_spec(t, spec, seed=11)
        b, pb = apply_spec(t, spec, seed=11)
        assert a.equals(b) and pa == pb
