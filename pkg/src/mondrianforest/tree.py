"""Mondrian tree structure: batch sampling and online extension.

A tree is stored as a flat arena of parallel numpy arrays indexed by integer
node handles. This keeps traversal cache-friendly, avoids reference cycles,
and makes serialization a matter of dumping arrays. Leaves additionally keep
the indices of their training points so that splitting can resume once a leaf
accumulates ``min_samples_split`` points during online updates.

All coordinates are expected in scaled ([0,1]-ish) feature units; scaling is
the caller's concern (see :mod:`mondrianforest.forest`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionMismatchError

NO_NODE = -1

_INITIAL_CAPACITY = 16


@dataclass
class AxisAlignedBox:
    """Per-dimension lower/upper bounds of a node's data extent."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.ndim != 1 or self.lower.shape != self.upper.shape:
            raise DataError("box bounds must be 1-D vectors of equal length")
        if self.lower.size < 1:
            raise DataError("box must have at least one dimension")
        if np.any(self.lower > self.upper):
            raise DataError("box lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def outside_distance(self, x) -> float:
        """Sum over dimensions of the distance by which ``x`` exits the box."""
        x = np.asarray(x, dtype=np.float64)
        return float(
            np.maximum(x - self.upper, 0.0).sum()
            + np.maximum(self.lower - x, 0.0).sum()
        )


def compute_extent(features, indices) -> AxisAlignedBox:
    """Dimension-wise min/max box of the selected rows of ``features``."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise DataError("cannot compute the extent of an empty index set")
    pts = np.asarray(features, dtype=np.float64)[idx]
    return AxisAlignedBox(pts.min(axis=0), pts.max(axis=0))


class MondrianTree:
    """Arena-backed Mondrian tree.

    Node fields live in parallel arrays; ``NO_NODE`` (-1) marks absent links.
    Leaves have ``tau == +inf`` and no children. Each node carries running
    label statistics (count, mean, M2) maintained by Welford updates, which
    double as the fast-mode posterior and as the evidence aggregates for
    exact belief propagation.
    """

    def __init__(self, dim: int, min_samples_split: int):
        if dim < 1:
            raise DataError("dimension must be >= 1")
        if min_samples_split < 1:
            raise DataError("min_samples_split must be >= 1")
        self.dim = int(dim)
        self.min_samples_split = int(min_samples_split)
        self.root = NO_NODE
        self.n_nodes = 0
        # bumped on every structural or statistical mutation; consumers use it
        # to invalidate cached posteriors and prediction tables
        self.version = 0
        self.leaf_indices: dict[int, list[int]] = {}
        cap = _INITIAL_CAPACITY
        self._parent = np.full(cap, NO_NODE, dtype=np.int64)
        self._left = np.full(cap, NO_NODE, dtype=np.int64)
        self._right = np.full(cap, NO_NODE, dtype=np.int64)
        self._split_dim = np.full(cap, NO_NODE, dtype=np.int64)
        self._split_loc = np.full(cap, np.nan, dtype=np.float64)
        self._tau = np.full(cap, np.inf, dtype=np.float64)
        self._lower = np.zeros((cap, dim), dtype=np.float64)
        self._upper = np.zeros((cap, dim), dtype=np.float64)
        self._count = np.zeros(cap, dtype=np.int64)
        self._s_mean = np.zeros(cap, dtype=np.float64)
        self._s_m2 = np.zeros(cap, dtype=np.float64)

    # -- arena plumbing ----------------------------------------------------

    def _grow(self):
        cap = self._parent.size * 2
        for name in ("_parent", "_left", "_right", "_split_dim"):
            old = getattr(self, name)
            new = np.full(cap, NO_NODE, dtype=np.int64)
            new[: old.size] = old
            setattr(self, name, new)
        for name, fill in (("_split_loc", np.nan), ("_tau", np.inf)):
            old = getattr(self, name)
            new = np.full(cap, fill, dtype=np.float64)
            new[: old.size] = old
            setattr(self, name, new)
        for name in ("_lower", "_upper"):
            old = getattr(self, name)
            new = np.zeros((cap, self.dim), dtype=np.float64)
            new[: old.shape[0]] = old
            setattr(self, name, new)
        for name, dtype in (("_count", np.int64), ("_s_mean", np.float64), ("_s_m2", np.float64)):
            old = getattr(self, name)
            new = np.zeros(cap, dtype=dtype)
            new[: old.size] = old
            setattr(self, name, new)

    def new_node(self, parent: int) -> int:
        if self.n_nodes == self._parent.size:
            self._grow()
        j = self.n_nodes
        self.n_nodes += 1
        self._parent[j] = parent
        self._left[j] = NO_NODE
        self._right[j] = NO_NODE
        self._split_dim[j] = NO_NODE
        self._split_loc[j] = np.nan
        self._tau[j] = np.inf
        self._count[j] = 0
        self._s_mean[j] = 0.0
        self._s_m2[j] = 0.0
        return j

    # -- views -------------------------------------------------------------

    @property
    def parent(self):
        return self._parent[: self.n_nodes]

    @property
    def left(self):
        return self._left[: self.n_nodes]

    @property
    def right(self):
        return self._right[: self.n_nodes]

    @property
    def split_dim(self):
        return self._split_dim[: self.n_nodes]

    @property
    def split_loc(self):
        return self._split_loc[: self.n_nodes]

    @property
    def tau(self):
        return self._tau[: self.n_nodes]

    @property
    def lower(self):
        return self._lower[: self.n_nodes]

    @property
    def upper(self):
        return self._upper[: self.n_nodes]

    @property
    def count(self):
        return self._count[: self.n_nodes]

    @property
    def s_mean(self):
        return self._s_mean[: self.n_nodes]

    @property
    def s_m2(self):
        return self._s_m2[: self.n_nodes]

    def is_leaf(self, j: int) -> bool:
        return self._left[j] == NO_NODE

    def tau_parent(self, j: int) -> float:
        p = self._parent[j]
        return 0.0 if p == NO_NODE else float(self._tau[p])

    def extent(self, j: int) -> AxisAlignedBox:
        return AxisAlignedBox(self._lower[j].copy(), self._upper[j].copy())

    def leaves(self):
        return [j for j in range(self.n_nodes) if self.is_leaf(j)]

    def leaf_for(self, x) -> int:
        j = self.root
        while not self.is_leaf(j):
            d = self._split_dim[j]
            j = self._left[j] if x[d] <= self._split_loc[j] else self._right[j]
        return int(j)

    def path_to_leaf(self, x) -> list[int]:
        j = self.root
        path = [j]
        while not self.is_leaf(j):
            d = self._split_dim[j]
            j = int(self._left[j] if x[d] <= self._split_loc[j] else self._right[j])
            path.append(j)
        return path

    def depth(self, j: int) -> int:
        d = 0
        while self._parent[j] != NO_NODE:
            j = self._parent[j]
            d += 1
        return d

    def _welford_add(self, j: int, value: float):
        n = self._count[j] + 1
        self._count[j] = n
        delta = value - self._s_mean[j]
        self._s_mean[j] += delta / n
        self._s_m2[j] += delta * (value - self._s_mean[j])


# -- sampling ---------------------------------------------------------------


def _pick_dim(weights, cum, total, rng) -> int:
    """Sample an index with probability proportional to ``weights``."""
    d = int(np.searchsorted(cum, rng.random() * total, side="right"))
    d = min(d, weights.size - 1)
    while weights[d] <= 0.0:
        d -= 1
    return d


def sample_mondrian_block(tree, node, features, labels, indices, tau_parent, rng):
    """Sample the Mondrian block at ``node`` over the given point indices.

    Iterative version of the recursive generative process: sets the node's
    data extent and label statistics, then, if the node holds at least
    ``min_samples_split`` points with a nonzero total range, draws a split
    time from Exponential(sum of ranges), a split dimension proportional to
    per-dimension range, a split location uniform on that range, and recurses
    into the induced left/right partition. Otherwise the node becomes a leaf
    (``tau = +inf``) retaining its point indices.
    """
    idx0 = np.asarray(indices, dtype=np.int64)
    if idx0.size == 0:
        raise DataError("cannot sample a Mondrian block over an empty index set")
    stack = [(node, idx0, float(tau_parent))]
    while stack:
        j, idx, tp = stack.pop()
        pts = features[idx]
        lower = pts.min(axis=0)
        upper = pts.max(axis=0)
        tree._lower[j] = lower
        tree._upper[j] = upper
        vals = labels[idx]
        mean = float(vals.mean())
        tree._count[j] = idx.size
        tree._s_mean[j] = mean
        tree._s_m2[j] = float(((vals - mean) ** 2).sum())
        ranges = upper - lower
        total = float(ranges.sum())
        if idx.size >= tree.min_samples_split and total > 0.0:
            tau = tp + rng.exponential(1.0 / total)
            cum = np.cumsum(ranges)
            d = _pick_dim(ranges, cum, total, rng)
            xi = float(rng.uniform(lower[d], upper[d]))
            # keep both children nonempty if the draw rounds up to the bound
            if xi >= upper[d]:
                xi = float(np.nextafter(upper[d], lower[d]))
            tree._tau[j] = tau
            tree._split_dim[j] = d
            tree._split_loc[j] = xi
            tree.leaf_indices.pop(j, None)
            go_left = features[idx, d] <= xi
            lchild = tree.new_node(j)
            rchild = tree.new_node(j)
            tree._left[j] = lchild
            tree._right[j] = rchild
            stack.append((rchild, idx[~go_left], tau))
            stack.append((lchild, idx[go_left], tau))
        else:
            # below the split threshold, or all points identical (rate 0)
            tree._tau[j] = np.inf
            tree._split_dim[j] = NO_NODE
            tree._split_loc[j] = np.nan
            tree._left[j] = NO_NODE
            tree._right[j] = NO_NODE
            tree.leaf_indices[j] = [int(i) for i in idx]
    tree.version += 1


def sample_mondrian_tree(features, labels, min_samples_split, rng) -> MondrianTree:
    """Sample a Mondrian tree over the full training slice."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 1:
        raise DataError("training features must be a nonempty N x D matrix")
    if labels.shape != (features.shape[0],):
        raise DataError("labels must be a vector matching the number of rows")
    if not (np.isfinite(features).all() and np.isfinite(labels).all()):
        raise DataError("training data contains non-finite values")
    tree = MondrianTree(features.shape[1], min_samples_split)
    root = tree.new_node(NO_NODE)
    tree.root = root
    sample_mondrian_block(tree, root, features, labels, np.arange(features.shape[0]), 0.0, rng)
    return tree


# -- online extension -------------------------------------------------------


def _insert_parent_above(tree, j, features, labels, index, x, outside, rate, split_time, rng):
    cum = np.cumsum(outside)
    d = _pick_dim(outside, cum, rate, rng)
    if x[d] > tree._upper[j, d]:
        xi = float(rng.uniform(tree._upper[j, d], x[d]))
    else:
        xi = float(rng.uniform(x[d], tree._lower[j, d]))
    p = tree._parent[j]
    new = tree.new_node(p)
    tree._tau[new] = split_time
    tree._split_dim[new] = d
    tree._split_loc[new] = xi
    tree._lower[new] = np.minimum(tree._lower[j], x)
    tree._upper[new] = np.maximum(tree._upper[j], x)
    # stats of the displaced subtree plus the new point
    tree._count[new] = tree._count[j]
    tree._s_mean[new] = tree._s_mean[j]
    tree._s_m2[new] = tree._s_m2[j]
    tree._welford_add(new, float(labels[index]))
    if p == NO_NODE:
        tree.root = new
    elif tree._left[p] == j:
        tree._left[p] = new
    else:
        tree._right[p] = new
    tree._parent[j] = new
    sibling = tree.new_node(new)
    if x[d] <= xi:
        tree._left[new] = sibling
        tree._right[new] = j
    else:
        tree._left[new] = j
        tree._right[new] = sibling
    sample_mondrian_block(
        tree, sibling, features, labels, np.array([index], dtype=np.int64), split_time, rng
    )


def extend_mondrian_tree(tree, features, labels, index, rng):
    """Add training point ``index`` to an existing tree (online update).

    Walks from the root; at each node the point may introduce a new parent
    split (with probability governed by how far the point lies outside the
    node's extent and the time budget before the node's own split), or be
    absorbed, enlarging the extent and updating the running label statistics.
    A leaf that reaches ``min_samples_split`` points resumes splitting via
    :func:`sample_mondrian_block`.
    """
    x = np.asarray(features[index], dtype=np.float64)
    if x.shape != (tree.dim,):
        raise DimensionMismatchError(
            f"point has dimension {x.size}, tree expects {tree.dim}"
        )
    j = tree.root
    tau_parent = 0.0
    while True:
        outside = np.maximum(tree._lower[j] - x, 0.0) + np.maximum(x - tree._upper[j], 0.0)
        rate = float(outside.sum())
        split_time = tau_parent + rng.exponential(1.0 / rate) if rate > 0.0 else np.inf
        if split_time < tree._tau[j]:
            _insert_parent_above(tree, j, features, labels, index, x, outside, rate, split_time, rng)
            tree.version += 1
            return
        np.minimum(tree._lower[j], x, out=tree._lower[j])
        np.maximum(tree._upper[j], x, out=tree._upper[j])
        tree._welford_add(j, float(labels[index]))
        if tree.is_leaf(j):
            tree.leaf_indices[j].append(int(index))
            if tree._count[j] >= tree.min_samples_split:
                # paused leaf: resume splitting now that it is large enough
                sample_mondrian_block(
                    tree, j, features, labels, tree.leaf_indices[j], tau_parent, rng
                )
            tree.version += 1
            return
        d = tree._split_dim[j]
        tau_parent = float(tree._tau[j])
        j = int(tree._left[j] if x[d] <= tree._split_loc[j] else tree._right[j])


def separation_stats(tree, j, x):
    """Return (delta, eta, p_separate) for node ``j`` and test point ``x``.

    ``delta`` is the time gap to the parent split, ``eta`` the total distance
    by which ``x`` exits the node's data extent, and ``p_separate`` the
    probability that the test point branches off just before reaching ``j``.
    """
    x = np.asarray(x, dtype=np.float64)
    eta = float(
        np.maximum(x - tree._upper[j], 0.0).sum()
        + np.maximum(tree._lower[j] - x, 0.0).sum()
    )
    delta = float(tree._tau[j]) - tree.tau_parent(j)
    if np.isinf(delta):
        p_sep = 1.0 if eta > 0.0 else 0.0
    else:
        p_sep = float(-np.expm1(-delta * eta))
    return delta, eta, p_sep
