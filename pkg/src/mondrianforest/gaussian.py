"""Hierarchical Gaussian label model over Mondrian tree nodes.

Every node carries a mean parameter; the chain prior shrinks a node toward
its parent with a variance increment driven by a sigmoid of the split time,
so deep nodes are tightly coupled to their parents. Labels attach to leaves
with Gaussian noise. Posteriors over the node means are computed either
exactly by two-pass Gaussian belief propagation (cost linear in the node
count) or approximately from the per-node running label statistics (the fast
empirical mode, O(path length) per online insertion).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import NumericalError
from .tree import NO_NODE, MondrianTree

GAMMA1_FLOOR = 1e-6


@dataclass
class HyperParams:
    """Shared hyperparameters of the hierarchical Gaussian prior and noise."""

    mu_H: float
    gamma1: float
    gamma2: float
    sigma_y_sq: float
    K: float


def fit_hyperparameters(labels, dim: int, n: int | None = None) -> HyperParams:
    """Closed-form hyperparameter heuristic.

    Maximizes the product of individual label marginals: the prior mean is
    the label mean and gamma1 solves gamma1 * (1/2 + 1/K) = Var(labels)
    (population variance) with K = min(2000, 2N) so that the noise fraction
    sigma_y^2 = gamma1 / K stays a nonzero share of the total variance.
    gamma2 = D / (20 log2 N) assumes unit-cube features and balanced trees.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if n is None:
        n = labels.size
    mu = float(labels.mean())
    var = float(np.mean((labels - mu) ** 2))
    k = min(2000.0, 2.0 * n)
    floor = GAMMA1_FLOOR * max(1.0, var)
    gamma1 = max(var / (0.5 + 1.0 / k), floor)
    gamma2 = dim / (20.0 * math.log2(max(n, 2)))
    return HyperParams(mu_H=mu, gamma1=gamma1, gamma2=gamma2, sigma_y_sq=gamma1 / k, K=k)


def variance_increment(tau_parent: float, tau_j: float, hp: HyperParams) -> float:
    """Prior variance added on the edge from a parent (at ``tau_parent``) to a node.

    gamma1 * (s(gamma2 * tau_j) - s(gamma2 * tau_parent)) with s the logistic
    sigmoid; s(+inf) = 1, so a root-to-leaf chain totals exactly gamma1 / 2.
    """
    return hp.gamma1 * float(expit(hp.gamma2 * tau_j) - expit(hp.gamma2 * tau_parent))


@dataclass
class NodePosterior:
    """Per-node Gaussian posterior over the node means.

    ``mode`` is "exact" (belief propagation) or "fast" (empirical moments,
    variance floored at sigma_y^2). ``tree_version`` records the tree state
    the posterior was computed against, for staleness checks.
    """

    mean: np.ndarray
    var: np.ndarray
    mode: str
    tree_version: int


def _phi_vector(tree: MondrianTree, hp: HyperParams) -> np.ndarray:
    tau = tree.tau
    parent = tree.parent
    tau_parent = np.where(parent >= 0, tree._tau[np.maximum(parent, 0)], 0.0)
    phi = hp.gamma1 * (expit(hp.gamma2 * tau) - expit(hp.gamma2 * tau_parent))
    return np.maximum(phi, 0.0)


def _topo_order(tree: MondrianTree) -> list[int]:
    """Node order with every parent before its children."""
    order = []
    stack = [tree.root]
    left, right = tree._left, tree._right
    while stack:
        j = stack.pop()
        order.append(j)
        if left[j] != NO_NODE:
            stack.append(int(left[j]))
            stack.append(int(right[j]))
    return order


def compute_posterior_bp(tree: MondrianTree, hp: HyperParams) -> NodePosterior:
    """Exact node-mean posteriors by two-pass Gaussian belief propagation.

    Messages are carried in natural parameters (precision, precision*mean);
    passing a belief through a chain edge with variance ``phi`` maps
    (r, h) -> (r, h) / (1 + phi*r), which is stable for r = 0 and phi = 0.
    Leaf evidence enters as count/sigma_y^2 precision around the leaf's label
    mean. Cost is linear in the number of nodes.
    """
    n = tree.n_nodes
    order = _topo_order(tree)
    phi = _phi_vector(tree, hp)
    # the hyper-mean acts as a point-mass parent of the root; a vanishing
    # root edge would make its message precision overflow, so floor it
    phi[tree.root] = max(phi[tree.root], 1e-15 * hp.gamma1)
    sigma = hp.sigma_y_sq
    left, right = tree._left, tree._right

    sub_r = np.zeros(n)
    sub_h = np.zeros(n)
    leaf = tree.left == NO_NODE
    counts = tree.count[leaf].astype(np.float64)
    sub_r[leaf] = counts / sigma
    sub_h[leaf] = counts * tree.s_mean[leaf] / sigma

    up_r = np.zeros(n)
    up_h = np.zeros(n)
    for j in reversed(order):
        lc, rc = left[j], right[j]
        if lc != NO_NODE:
            sub_r[j] += up_r[lc] + up_r[rc]
            sub_h[j] += up_h[lc] + up_h[rc]
        denom = 1.0 + phi[j] * sub_r[j]
        up_r[j] = sub_r[j] / denom
        up_h[j] = sub_h[j] / denom

    down_r = np.zeros(n)
    down_h = np.zeros(n)
    down_r[tree.root] = 1.0 / phi[tree.root]
    down_h[tree.root] = hp.mu_H / phi[tree.root]
    belief_r = np.empty(n)
    belief_h = np.empty(n)
    for j in order:
        belief_r[j] = down_r[j] + sub_r[j]
        belief_h[j] = down_h[j] + sub_h[j]
        lc, rc = left[j], right[j]
        if lc != NO_NODE:
            for c in (int(lc), int(rc)):
                cav_r = belief_r[j] - up_r[c]
                cav_h = belief_h[j] - up_h[c]
                denom = 1.0 + phi[c] * cav_r
                down_r[c] = cav_r / denom
                down_h[c] = cav_h / denom

    post_var = 1.0 / belief_r
    post_mean = belief_h / belief_r
    bad = ~(np.isfinite(post_var) & np.isfinite(post_mean))
    if bad.any():
        raise NumericalError(f"non-finite posterior at node {int(np.flatnonzero(bad)[0])}")
    return NodePosterior(post_mean, post_var, "exact", tree.version)


def fast_posterior(tree: MondrianTree, hp: HyperParams) -> NodePosterior:
    """Empirical-moment posteriors from the per-node running statistics."""
    counts = tree.count
    has_data = counts > 0
    mean = np.where(has_data, tree.s_mean, hp.mu_H)
    var = np.where(has_data, tree.s_m2 / np.maximum(counts, 1), 0.0)
    # a node's empirical variance already includes label noise, but can be
    # degenerate (single point); keep it at least at the noise level
    var = np.maximum(var, hp.sigma_y_sq)
    var = np.where(has_data, var, 0.5 * hp.gamma1)
    return NodePosterior(mean, var, "fast", tree.version)


def fast_posterior_read(tree: MondrianTree, j: int, hp: HyperParams):
    """Fast-mode (mean, variance) at one node; prior fallback when empty."""
    if tree._count[j] == 0:
        return hp.mu_H, 0.5 * hp.gamma1
    mean = float(tree._s_mean[j])
    var = float(tree._s_m2[j]) / float(tree._count[j])
    return mean, max(var, hp.sigma_y_sq)
