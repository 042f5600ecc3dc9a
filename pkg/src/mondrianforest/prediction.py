"""Predictive mixtures for Mondrian trees and forests.

A test point walks from the root toward its leaf; at every node it may have
branched off just before arriving (the further outside the node's data extent
it lies, the likelier), contributing one Gaussian component anchored at the
parent's posterior. The surviving mass ends in the leaf's posterior. The
ensemble is the equal-weight mixture over trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DataError
from .gaussian import HyperParams, NodePosterior
from .tree import MondrianTree, separation_stats

PRUNE_WEIGHT = 1e-12

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PredictiveComponent:
    w: float
    m: float
    v: float


class PredictiveMixture:
    """Weighted Gaussian mixture; weights sum to one."""

    def __init__(self, components):
        comps = list(components)
        if not comps:
            raise DataError("predictive mixture must have at least one component")
        self.components = comps

    def __len__(self):
        return len(self.components)

    def _arrays(self):
        w = np.array([c.w for c in self.components])
        m = np.array([c.m for c in self.components])
        v = np.array([c.v for c in self.components])
        return w, m, v

    def moments(self):
        w, m, v = self._arrays()
        mean = float(np.dot(w, m))
        var = float(np.dot(w, v + m * m) - mean * mean)
        return mean, var

    def logpdf(self, y: float) -> float:
        w, m, v = self._arrays()
        log_terms = np.log(w) - 0.5 * (_LOG_2PI + np.log(v) + (y - m) ** 2 / v)
        return float(logsumexp(log_terms))

    def scaled_variance(self, factor: float) -> "PredictiveMixture":
        return PredictiveMixture(
            PredictiveComponent(c.w, c.m, c.v * factor) for c in self.components
        )


def mixture_moments(mixture: PredictiveMixture):
    return mixture.moments()


def log_predictive_density(mixture: PredictiveMixture, y: float) -> float:
    return mixture.logpdf(y)


class PredictionTables:
    """Per-node component moments, precomputed once per (tree, posterior).

    ``branch_mean``/``branch_var`` describe the component emitted when a test
    point branches off just before a node: the parent's posterior plus the
    prior variance of a fresh chain hanging below the parent's split time
    (for the root, the hyper-prior). ``leaf_mean``/``leaf_var`` describe the
    stay-at-leaf component. In exact mode label noise is added explicitly; in
    fast mode the empirical variances already contain it.
    """

    def __init__(self, tree: MondrianTree, posterior: NodePosterior, hp: HyperParams):
        if posterior.tree_version != tree.version:
            raise DataError("posterior is stale for this tree")
        parent = tree.parent
        tau_parent = np.where(parent >= 0, tree._tau[np.maximum(parent, 0)], 0.0)
        inflation = hp.gamma1 * (1.0 - expit(hp.gamma2 * tau_parent))
        noise = hp.sigma_y_sq if posterior.mode == "exact" else 0.0
        pm, pv = posterior.mean, posterior.var
        root_var = 0.5 * hp.gamma1 + hp.sigma_y_sq
        has_parent = parent >= 0
        pidx = np.maximum(parent, 0)
        self.branch_mean = np.where(has_parent, pm[pidx], hp.mu_H)
        self.branch_var = np.where(has_parent, pv[pidx] + inflation + noise, root_var)
        self.leaf_mean = pm.copy()
        self.leaf_var = pv + (hp.sigma_y_sq if posterior.mode == "exact" else 0.0)
        self.tree_version = tree.version


def _tables_for(tree, posterior, hp) -> PredictionTables:
    cached = getattr(posterior, "_tables", None)
    if cached is None or cached.tree_version != tree.version:
        cached = PredictionTables(tree, posterior, hp)
        posterior._tables = cached
    return cached


def predict_tree(tree, posterior, hp, x) -> PredictiveMixture:
    """Root-to-leaf predictive mixture for one tree and one test point."""
    x = np.asarray(x, dtype=np.float64)
    tables = _tables_for(tree, posterior, hp)
    comps = []
    j = tree.root
    p_not_separated = 1.0
    while True:
        _, _, p_sep = separation_stats(tree, j, x)
        if p_sep > 0.0:
            comps.append(
                PredictiveComponent(
                    p_not_separated * p_sep,
                    float(tables.branch_mean[j]),
                    float(tables.branch_var[j]),
                )
            )
        if tree.is_leaf(j):
            stay = p_not_separated * (1.0 - p_sep)
            if stay > 0.0:
                comps.append(
                    PredictiveComponent(
                        stay, float(tables.leaf_mean[j]), float(tables.leaf_var[j])
                    )
                )
            break
        p_not_separated *= 1.0 - p_sep
        d = tree._split_dim[j]
        j = int(tree._left[j] if x[d] <= tree._split_loc[j] else tree._right[j])
    return _pruned(comps)


def _pruned(comps) -> PredictiveMixture:
    kept = [c for c in comps if c.w >= PRUNE_WEIGHT]
    if not kept:
        kept = [max(comps, key=lambda c: c.w)]
    total = sum(c.w for c in kept)
    return PredictiveMixture(
        PredictiveComponent(c.w / total, c.m, c.v) for c in kept
    )


def predict_forest(model, x) -> PredictiveMixture:
    """Equal-weight concatenation of the per-tree mixtures (scaled-space x)."""
    mixtures = model.tree_mixtures(x)
    m = len(mixtures)
    comps = [
        PredictiveComponent(c.w / m, c.m, c.v)
        for mix in mixtures
        for c in mix.components
    ]
    return PredictiveMixture(comps)


def tree_batch_predict(tree, posterior, hp, X, y=None, var_scale=1.0):
    """Vectorized mixture moments (and density) for many test points.

    Walks all points down the tree level-synchronously. Returns
    ``(first_moment, second_moment, density)`` where the moments are
    sum(w*m) and sum(w*(v+m^2)) over each point's mixture and ``density`` is
    the mixture pdf at the matching ``y`` (or None). ``var_scale`` multiplies
    every component variance, which is used by calibration stress tests.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    tables = _tables_for(tree, posterior, hp)
    lower, upper = tree.lower, tree.upper
    tau, parent = tree.tau, tree.parent
    left, right = tree.left, tree.right
    split_dim, split_loc = tree.split_dim, tree.split_loc

    cur = np.full(n, tree.root, dtype=np.int64)
    p_not = np.ones(n)
    active = np.arange(n)
    m1 = np.zeros(n)
    m2 = np.zeros(n)
    dens = np.zeros(n) if y is not None else None

    def _accumulate(idx, w, mean, var):
        m1[idx] += w * mean
        m2[idx] += w * (var + mean * mean)
        if dens is not None:
            z = (y[idx] - mean) ** 2 / var
            dens[idx] += w * np.exp(-0.5 * z) / np.sqrt(2.0 * math.pi * var)

    while active.size:
        nodes = cur[active]
        xa = X[active]
        lo = lower[nodes]
        up = upper[nodes]
        eta = (np.maximum(xa - up, 0.0) + np.maximum(lo - xa, 0.0)).sum(axis=1)
        par = parent[nodes]
        tau_par = np.where(par >= 0, tau[np.maximum(par, 0)], 0.0)
        delta = tau[nodes] - tau_par
        is_leaf = left[nodes] < 0
        with np.errstate(invalid="ignore"):
            p_sep = -np.expm1(-delta * eta)
        p_sep = np.where(is_leaf, (eta > 0.0).astype(np.float64), p_sep)
        w_branch = p_not[active] * p_sep
        _accumulate(active, w_branch, tables.branch_mean[nodes], tables.branch_var[nodes] * var_scale)
        w_stay = np.where(is_leaf, p_not[active] * (1.0 - p_sep), 0.0)
        _accumulate(active, w_stay, tables.leaf_mean[nodes], tables.leaf_var[nodes] * var_scale)
        p_not[active] *= 1.0 - p_sep
        inner = ~is_leaf
        if not inner.any():
            break
        sub = active[inner]
        nodes_in = nodes[inner]
        d = split_dim[nodes_in]
        go_left = X[sub, d] <= split_loc[nodes_in]
        cur[sub] = np.where(go_left, left[nodes_in], right[nodes_in])
        active = sub
    return m1, m2, dens
