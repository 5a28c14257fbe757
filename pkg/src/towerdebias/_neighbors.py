"""Exact k-nearest-neighbor selection with a deterministic tie rule.

Queries go through a kd-tree for speed. The tree breaks exact distance ties
arbitrarily, so any query whose k-th and (k+1)-th distances coincide is
re-resolved by a direct scan that orders candidates by (squared distance,
reference index); the lowest index wins among equal distances. The returned
neighbor sets are therefore exact and independent of tree internals.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ._validation import as_float_matrix


class NeighborIndex:
    """Immutable index over a fixed point matrix answering exact top-k queries."""

    def __init__(self, points):
        points = as_float_matrix(points, "points")
        if points.shape[0] == 0:
            raise ValueError("cannot index an empty point set")
        self._points = points.copy()
        self._points.setflags(write=False)
        self._tree = cKDTree(self._points)

    @property
    def n(self) -> int:
        return self._points.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n_features(self) -> int:
        return self._points.shape[1]

    def _scan_topk(self, query: np.ndarray, k: int) -> np.ndarray:
        d2 = ((self._points - query) ** 2).sum(axis=1)
        order = np.lexsort((np.arange(self.n), d2))
        return order[:k]

    def query_topk(self, queries, k: int, workers: int = -1) -> np.ndarray:
        """Indices of the k nearest points per query row, each row sorted by index.

        The selected set is the first k under the ordering (distance ascending,
        reference index ascending); rows are returned index-sorted so that
        downstream aggregation is order-deterministic.
        """
        queries = as_float_matrix(queries, "queries")
        if queries.shape[1] != self.n_features:
            raise ValueError(
                f"query has {queries.shape[1]} columns, index has {self.n_features}"
            )
        if not 1 <= k <= self.n:
            raise ValueError(f"k must be in [1, {self.n}], got {k}")
        if queries.shape[0] == 0:
            return np.empty((0, k), dtype=np.intp)
        if k == self.n:
            return np.tile(np.arange(self.n, dtype=np.intp), (queries.shape[0], 1))

        # One extra neighbor exposes ties straddling the k boundary.
        dist, idx = self._tree.query(queries, k=k + 1, workers=workers)
        selected = np.array(idx[:, :k], dtype=np.intp)
        boundary_tie = dist[:, k] == dist[:, k - 1]
        for i in np.flatnonzero(boundary_tie):
            selected[i] = self._scan_topk(queries[i], k)
        selected.sort(axis=1)
        return selected
