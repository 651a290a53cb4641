"""Level-wise tree growing kernels shared by DTree, RF, ExTree and GBT.

Each feature is argsorted once per fit.  A level is grown by scanning every
feature's sorted order and accumulating left-side statistics per open node,
so one level costs O(n * d) regardless of how many nodes are open.  Since
candidates are visited by ascending feature index and ascending threshold,
keeping only strictly better scores yields the lowest feature / lowest
threshold on ties.

Node arrays: ``feature`` (-1 at leaves), ``threshold``, ``left``, ``right``
and ``value`` (class distribution, or a single leaf weight for boosting).
Rows with ``x[feature] <= threshold`` go left.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class TreeNode:
    feature: int
    threshold: float
    left: int
    right: int
    value: np.ndarray

    @property
    def is_leaf(self):
        return self.feature < 0


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.size

    def node(self, i) -> TreeNode:
        return TreeNode(int(self.feature[i]), float(self.threshold[i]), int(self.left[i]),
                        int(self.right[i]), self.value[i])

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        return _apply(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold,
                      self.left, self.right)

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def equals(self, other: "Tree") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("feature", "threshold", "left", "right", "value"))

    def tensors(self, prefix):
        return {prefix + f: getattr(self, f) for f in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_tensors(cls, tensors, prefix):
        return cls(*(tensors[prefix + f] for f in ("feature", "threshold", "left", "right", "value")))


@njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def presort(X) -> np.ndarray:
    """Row order per feature, shape ``(d, n)``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T).astype(np.int64)


@njit(cache=True)
def _grow_gini(X, y, w, order, n_classes, max_depth, min_split, max_features, random_split, seed):
    n, d = X.shape
    K = n_classes
    np.random.seed(seed)
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, K))

    pos = np.full(n, -1, dtype=np.int64)
    for r in range(n):
        if w[r] > 0:
            pos[r] = 0
            value[0, y[r]] += w[r]
    n_nodes = 1

    # open nodes of the current level, mapped to local slots
    slot = np.full(cap, -1, dtype=np.int64)
    root_total = 0.0
    root_classes = 0
    for k in range(K):
        root_total += value[0, k]
        if value[0, k] > 0:
            root_classes += 1
    open_nodes = np.zeros(1 if root_classes > 1 and root_total >= min_split and max_depth != 0 else 0,
                          dtype=np.int64)
    depth = 0
    while open_nodes.size > 0:
        m = open_nodes.size
        for s in range(m):
            slot[open_nodes[s]] = s
        counts = np.zeros((m, K))
        totals = np.zeros(m)
        for s in range(m):
            for k in range(K):
                counts[s, k] = value[open_nodes[s], k]
                totals[s] += counts[s, k]

        lo = np.full((m, d), np.inf)
        hi = np.full((m, d), -np.inf)
        for r in range(n):
            q = pos[r]
            if q < 0 or slot[q] < 0:
                continue
            s = slot[q]
            for f in range(d):
                v = X[r, f]
                if v < lo[s, f]:
                    lo[s, f] = v
                if v > hi[s, f]:
                    hi[s, f] = v

        allowed = np.zeros((m, d), dtype=np.bool_)
        thr = np.zeros((m, d))
        perm = np.arange(d)
        for s in range(m):
            if max_features >= d:
                for f in range(d):
                    allowed[s, f] = hi[s, f] > lo[s, f]
            else:
                for i in range(d - 1, 0, -1):
                    j = np.random.randint(0, i + 1)
                    tmp = perm[i]
                    perm[i] = perm[j]
                    perm[j] = tmp
                taken = 0
                for i in range(d):
                    f = perm[i]
                    if hi[s, f] > lo[s, f]:
                        allowed[s, f] = True
                        taken += 1
                        if taken == max_features:
                            break
            if random_split:
                for f in range(d):
                    if allowed[s, f]:
                        t = lo[s, f] + np.random.random() * (hi[s, f] - lo[s, f])
                        if t <= lo[s, f] or t >= hi[s, f]:
                            t = 0.5 * (lo[s, f] + hi[s, f])
                        thr[s, f] = t

        best_score = np.full(m, -np.inf)
        best_f = np.full(m, -1, dtype=np.int64)
        best_t = np.zeros(m)
        lc = np.zeros((m, K))
        ln = np.zeros(m)
        lsq = np.zeros(m)
        last = np.zeros(m)
        seen = np.zeros(m, dtype=np.bool_)
        for f in range(d):
            lc[:, :] = 0.0
            ln[:] = 0.0
            lsq[:] = 0.0
            seen[:] = False
            for p in range(n):
                r = order[f, p]
                q = pos[r]
                if q < 0 or slot[q] < 0:
                    continue
                s = slot[q]
                if not allowed[s, f]:
                    continue
                v = X[r, f]
                if random_split:
                    if v <= thr[s, f]:
                        k = y[r]
                        lc[s, k] += w[r]
                        ln[s] += w[r]
                    continue
                if seen[s] and v > last[s]:
                    nr = totals[s] - ln[s]
                    rsq = 0.0
                    for k in range(K):
                        c = counts[s, k] - lc[s, k]
                        rsq += c * c
                    score = lsq[s] / ln[s] + rsq / nr
                    if score > best_score[s]:
                        best_score[s] = score
                        best_f[s] = f
                        mid = 0.5 * (last[s] + v)
                        best_t[s] = mid if mid < v else last[s]
                k = y[r]
                lsq[s] += w[r] * (2.0 * lc[s, k] + w[r])
                lc[s, k] += w[r]
                ln[s] += w[r]
                last[s] = v
                seen[s] = True
            if random_split:
                for s in range(m):
                    if not allowed[s, f] or ln[s] == 0.0 or ln[s] == totals[s]:
                        continue
                    nr = totals[s] - ln[s]
                    lsq_s = 0.0
                    rsq = 0.0
                    for k in range(K):
                        lsq_s += lc[s, k] * lc[s, k]
                        c = counts[s, k] - lc[s, k]
                        rsq += c * c
                    score = lsq_s / ln[s] + rsq / nr
                    if score > best_score[s]:
                        best_score[s] = score
                        best_f[s] = f
                        best_t[s] = thr[s, f]

        n_next = 0
        next_nodes = np.empty(2 * m, dtype=np.int64)
        for s in range(m):
            node = open_nodes[s]
            if best_f[s] < 0:
                continue
            feature[node] = best_f[s]
            threshold[node] = best_t[s]
            left[node] = n_nodes
            right[node] = n_nodes + 1
            n_nodes += 2
        for r in range(n):
            q = pos[r]
            if q < 0 or slot[q] < 0 or feature[q] < 0:
                continue
            child = left[q] if X[r, feature[q]] <= threshold[q] else right[q]
            pos[r] = child
            value[child, y[r]] += w[r]
        for s in range(m):
            node = open_nodes[s]
            slot[node] = -1
            if feature[node] < 0:
                continue
            for child in (left[node], right[node]):
                tot = 0.0
                nonzero = 0
                for k in range(K):
                    tot += value[child, k]
                    if value[child, k] > 0:
                        nonzero += 1
                if nonzero > 1 and tot >= min_split and (max_depth < 0 or depth + 1 < max_depth):
                    next_nodes[n_next] = child
                    n_next += 1
        open_nodes = next_nodes[:n_next].copy()
        depth += 1

    for i in range(n_nodes):
        tot = 0.0
        for k in range(K):
            tot += value[i, k]
        for k in range(K):
            value[i, k] /= tot
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


def grow_classification_tree(X, y, n_classes, order=None, weights=None, max_depth=None,
                             min_samples_split=2, max_features=None, random_split=False, seed=0) -> Tree:
    """Gini tree over rows with positive ``weights`` (integer bootstrap counts)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot grow a tree on zero rows")
    order = presort(X) if order is None else order
    w = np.ones(n) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
    arrays = _grow_gini(X, y, w, order, int(n_classes), -1 if max_depth is None else int(max_depth),
                        int(min_samples_split), d if max_features is None else int(max_features),
                        bool(random_split), int(seed))
    tree = Tree(*arrays)
    if tree.n_nodes == 1 and not tree.value[0].sum():
        raise ValueError("all sample weights are zero")
    return tree


@njit(cache=True)
def _grow_newton(X, g, h, order, max_depth, lam):
    n, d = X.shape
    cap = 2 ** (max_depth + 1) + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    G = np.zeros(cap)
    H = np.zeros(cap)
    pos = np.zeros(n, dtype=np.int64)
    for r in range(n):
        G[0] += g[r]
        H[0] += h[r]
    n_nodes = 1
    slot = np.full(cap, -1, dtype=np.int64)
    open_nodes = np.zeros(1, dtype=np.int64)
    depth = 0
    while open_nodes.size > 0 and depth < max_depth:
        m = open_nodes.size
        for s in range(m):
            slot[open_nodes[s]] = s
        best_gain = np.zeros(m)
        best_f = np.full(m, -1, dtype=np.int64)
        best_t = np.zeros(m)
        gl = np.zeros(m)
        hl = np.zeros(m)
        last = np.zeros(m)
        seen = np.zeros(m, dtype=np.bool_)
        for f in range(d):
            gl[:] = 0.0
            hl[:] = 0.0
            seen[:] = False
            for p in range(n):
                r = order[f, p]
                q = pos[r]
                if q < 0 or slot[q] < 0:
                    continue
                s = slot[q]
                v = X[r, f]
                if seen[s] and v > last[s]:
                    Gq = G[q]
                    Hq = H[q]
                    gr = Gq - gl[s]
                    hr = Hq - hl[s]
                    gain = 0.5 * (gl[s] * gl[s] / (hl[s] + lam) + gr * gr / (hr + lam)
                                  - Gq * Gq / (Hq + lam))
                    if gain > best_gain[s]:
                        best_gain[s] = gain
                        best_f[s] = f
                        mid = 0.5 * (last[s] + v)
                        best_t[s] = mid if mid < v else last[s]
                gl[s] += g[r]
                hl[s] += h[r]
                last[s] = v
                seen[s] = True
        for s in range(m):
            node = open_nodes[s]
            if best_f[s] < 0:
                continue
            feature[node] = best_f[s]
            threshold[node] = best_t[s]
            left[node] = n_nodes
            right[node] = n_nodes + 1
            n_nodes += 2
        for r in range(n):
            q = pos[r]
            if q < 0 or slot[q] < 0 or feature[q] < 0:
                if q >= 0 and slot[q] >= 0:
                    pos[r] = -1
                continue
            child = left[q] if X[r, feature[q]] <= threshold[q] else right[q]
            pos[r] = child
            G[child] += g[r]
            H[child] += h[r]
        n_next = 0
        next_nodes = np.empty(2 * m, dtype=np.int64)
        for s in range(m):
            node = open_nodes[s]
            slot[node] = -1
            if feature[node] >= 0:
                next_nodes[n_next] = left[node]
                next_nodes[n_next + 1] = right[node]
                n_next += 2
        open_nodes = next_nodes[:n_next].copy()
        depth += 1
    weight = np.zeros(n_nodes)
    for i in range(n_nodes):
        weight[i] = -G[i] / (H[i] + lam)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), weight)


def grow_newton_tree(X, grad, hess, order=None, max_depth=6, l2_lambda=1.0) -> Tree:
    """Second-order regression tree: leaf weight ``-G / (H + lambda)``, splits on positive gain."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    order = presort(X) if order is None else order
    arrays = _grow_newton(X, np.ascontiguousarray(grad, dtype=np.float64),
                          np.ascontiguousarray(hess, dtype=np.float64), order, int(max_depth),
                          float(l2_lambda))
    return Tree(*arrays)


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


def leaf_weight(G, H, l2_lambda) -> float:
    return -G / (H + l2_lambda)


def split_gain(GL, HL, GR, HR, l2_lambda) -> float:
    G, H = GL + GR, HL + HR
    return 0.5 * (GL * GL / (HL + l2_lambda) + GR * GR / (HR + l2_lambda) - G * G / (H + l2_lambda))
