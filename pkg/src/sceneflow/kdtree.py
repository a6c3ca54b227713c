"""Small kD-trees over patch descriptors.

Queries are approximate by design: a query descends to exactly one leaf
and the elements stored there form the candidate pool. No backtracking
takes place, matching the shallow randomized search the initialization
stage builds on. A per-row forest variant restricts candidates to the
query's image row, which encodes the epipolar constraint of rectified
stereo pairs.
"""

from __future__ import annotations

import numpy as np


class KdTree:
    """Median-split kD-tree whose queries return whole leaves."""

    def __init__(self, data: np.ndarray, leaf_size: int = 8):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] == 0:
            raise ValueError(f"expected non-empty (N, D) data, got {data.shape}")
        if leaf_size < 1:
            raise ValueError(f"leaf size must be >= 1, got {leaf_size}")
        self.data = data
        self.leaf_size = leaf_size
        # flat node arrays; leaves store [start, stop) ranges of self.index
        self._dim: list[int] = []
        self._thresh: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._range: list[tuple[int, int]] = []
        self.index = np.arange(data.shape[0])
        self._build(0, data.shape[0])

    def _new_node(self) -> int:
        self._dim.append(-1)
        self._thresh.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._range.append((0, 0))
        return len(self._dim) - 1

    def _build(self, lo: int, hi: int) -> int:
        node = self._new_node()
        block = self.data[self.index[lo:hi]]
        spread = block.max(axis=0) - block.min(axis=0)
        if hi - lo <= self.leaf_size or spread.max() == 0.0:
            self._range[node] = (lo, hi)
            return node
        dim = int(np.argmax(spread))
        order = np.argsort(block[:, dim], kind="stable")
        self.index[lo:hi] = self.index[lo:hi][order]
        mid = (lo + hi) // 2
        lo_val = self.data[self.index[mid - 1], dim]
        hi_val = self.data[self.index[mid], dim]
        self._dim[node] = dim
        self._thresh[node] = 0.5 * (lo_val + hi_val)
        self._left[node] = self._build(lo, mid)
        self._right[node] = self._build(mid, hi)
        return node

    def query(self, q: np.ndarray) -> np.ndarray:
        """Indices (into the build data) of the leaf the query lands in."""
        q = np.asarray(q, dtype=np.float64)
        node = 0
        while self._dim[node] >= 0:
            if q[self._dim[node]] <= self._thresh[node]:
                node = self._left[node]
            else:
                node = self._right[node]
        lo, hi = self._range[node]
        return self.index[lo:hi].copy()


class EpipolarForest:
    """One kD-tree per image row; queries only see their own row."""

    def __init__(self, pixels: np.ndarray, descriptors: np.ndarray, leaf_size: int = 8):
        pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        descriptors = np.asarray(descriptors, dtype=np.float64)
        if pixels.shape[0] != descriptors.shape[0]:
            raise ValueError("pixels and descriptors must align")
        self._trees: dict[int, tuple[KdTree, np.ndarray]] = {}
        for row in np.unique(pixels[:, 1]):
            sel = np.nonzero(pixels[:, 1] == row)[0]
            self._trees[int(row)] = (KdTree(descriptors[sel], leaf_size), sel)

    def query(self, q: np.ndarray, row: int) -> np.ndarray:
        """Candidate indices (into the build arrays) on the given row."""
        entry = self._trees.get(int(row))
        if entry is None:
            return np.empty(0, dtype=np.int64)
        tree, sel = entry
        return sel[tree.query(q)]

    @property
    def rows(self) -> list[int]:
        return sorted(self._trees)
