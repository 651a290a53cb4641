"""Exact brute-force Euclidean k-nearest-neighbor search.

Results are ordered by ascending distance, ties going to the lower row id.
Every resampler and the kNN classifier go through this one index, so all of
them agree on neighbor sets.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _topk(points, queries, k, exclude):
    m = queries.shape[0]
    n = points.shape[0]
    d = points.shape[1]
    out_idx = np.full((m, k), -1, dtype=np.int64)
    out_d = np.full((m, k), np.inf)
    for i in range(m):
        cnt = 0
        for j in range(n):
            if j == exclude[i]:
                continue
            s = 0.0
            for t in range(d):
                diff = points[j, t] - queries[i, t]
                s += diff * diff
            if cnt < k:
                pos = cnt
                cnt += 1
            elif s < out_d[i, k - 1]:
                pos = k - 1
            else:
                continue
            # strict comparison keeps the earlier (lower) row id ahead on ties
            while pos > 0 and out_d[i, pos - 1] > s:
                out_d[i, pos] = out_d[i, pos - 1]
                out_idx[i, pos] = out_idx[i, pos - 1]
                pos -= 1
            out_d[i, pos] = s
            out_idx[i, pos] = j
    return out_idx, out_d


class NeighborIndex:
    """Read-only index over the rows of ``points``."""

    def __init__(self, points):
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2-D matrix")

    def __len__(self):
        return self.points.shape[0]

    def query(self, k: int, queries=None, self_exclude: bool = False):
        """Return ``(indices, distances)`` of shape ``(m, k)``.

        With ``queries=None`` the indexed points query themselves; with
        ``self_exclude`` row ``i`` is never reported as its own neighbor.
        """
        if queries is None:
            q = self.points
            exclude = np.arange(q.shape[0], dtype=np.int64) if self_exclude else np.full(q.shape[0], -1, np.int64)
        else:
            if self_exclude:
                raise ValueError("self_exclude needs queries=None")
            q = np.ascontiguousarray(queries, dtype=np.float64)
            if q.ndim != 2 or q.shape[1] != self.points.shape[1]:
                raise ValueError("query dimension does not match index")
            exclude = np.full(q.shape[0], -1, np.int64)
        available = len(self) - (1 if self_exclude else 0)
        if k < 1 or k > available:
            raise ValueError(f"k={k} outside [1, {available}]")
        idx, sq = _topk(self.points, q, int(k), exclude)
        return idx, np.sqrt(sq)
