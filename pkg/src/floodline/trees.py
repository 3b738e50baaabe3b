"""CART regression trees with a compiled split-finding kernel.

Trees are grown by greedy binary splits maximizing weighted variance
reduction. Split candidates are the midpoints between consecutive distinct
sorted values of each candidate feature; at each node a uniform random subset
of features is considered. Growth stops at the depth limit, when a child
would fall below the minimum leaf size, or when a node's targets have zero
variance. Leaves predict the mean target of their training rows.

Implementation notes:

* The kernel keeps one row stream per feature, presorted by that feature's
  value, and stably partitions every stream at each split, so no sorting
  happens inside the kernel and the grown structure is deterministic.
* Bootstrap samples are passed as a per-row multiplicity vector; the streams
  replicate repeated rows.
* Per-node feature subsets are drawn with a splitmix64 PRNG seeded from the
  tree's PCG64 stream, keeping the kernel free of Python-level RNG calls.
* Candidate enumeration order is (features in drawn order, thresholds
  ascending); a later candidate replaces the incumbent only on strictly
  larger gain, which fixes tie-breaking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from numba import njit

U64 = np.uint64
UNLIMITED_DEPTH = np.int64(2**62)


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = (state + U64(0x9E3779B97F4A7C15)) & U64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)) & U64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)) & U64(0xFFFFFFFFFFFFFFFF)
    z = z ^ (z >> U64(31))
    return state, z


@njit(cache=True)
def _fit_tree_kernel(XT, y, presort, counts, n_sample, max_depth, min_leaf, subset_size, seed):
    f, n = XT.shape
    max_nodes = 2 * n_sample + 1

    feat = np.full(max_nodes, -1, np.int32)
    thr = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros(max_nodes, np.float64)
    importance = np.zeros(f, np.float64)
    train_pred = np.zeros(n, np.float64)

    # per-feature row streams with bootstrap multiplicity, sorted by feature
    order = np.empty((f, n_sample), np.int32)
    for j in range(f):
        k = 0
        for t in range(n):
            r = presort[j, t]
            for _ in range(counts[r]):
                order[j, k] = r
                k += 1

    scratch_l = np.empty(n_sample, np.int32)
    scratch_r = np.empty(n_sample, np.int32)
    perm = np.empty(f, np.int32)

    stack_i = np.empty((max_nodes, 4), np.int64)
    stack_f = np.empty((max_nodes, 2), np.float64)
    top = 0
    stack_i[0, 0] = 0
    stack_i[0, 1] = 0
    stack_i[0, 2] = n_sample
    stack_i[0, 3] = 0
    s0 = 0.0
    s20 = 0.0
    for i in range(n_sample):
        yv = y[order[0, i]]
        s0 += yv
        s20 += yv * yv
    stack_f[0, 0] = s0
    stack_f[0, 1] = s20
    n_nodes = 1
    rng_state = seed

    while top >= 0:
        node = stack_i[top, 0]
        start = stack_i[top, 1]
        end = stack_i[top, 2]
        depth = stack_i[top, 3]
        s = stack_f[top, 0]
        s2 = stack_f[top, 1]
        top -= 1
        m = end - start
        mean = s / m
        value[node] = mean
        sse_parent = s2 - s * s / m

        if depth >= max_depth or m < 2 * min_leaf or sse_parent <= 0.0:
            for i in range(start, end):
                train_pred[order[0, i]] = mean
            continue

        for j in range(f):
            perm[j] = j
        n_sub = subset_size if subset_size < f else f
        if n_sub < f:
            for j in range(n_sub):
                rng_state, z = _splitmix64(rng_state)
                k = j + np.int64(z % U64(f - j))
                tmp = perm[j]
                perm[j] = perm[k]
                perm[k] = tmp

        best_gain = 0.0
        best_feat = -1
        best_thr = 0.0
        best_ls = 0.0
        best_ls2 = 0.0
        for jj in range(n_sub):
            fj = perm[jj]
            xrow = XT[fj]
            ls = 0.0
            ls2 = 0.0
            prev_x = xrow[order[fj, start]]
            for i in range(start, end - 1):
                r = order[fj, i]
                yv = y[r]
                ls += yv
                ls2 += yv * yv
                nl = i - start + 1
                x_next = xrow[order[fj, i + 1]]
                if x_next != prev_x:
                    if nl >= min_leaf and (m - nl) >= min_leaf:
                        rs = s - ls
                        rs2 = s2 - ls2
                        gain = sse_parent - (ls2 - ls * ls / nl) - (rs2 - rs * rs / (m - nl))
                        if gain > best_gain:
                            best_gain = gain
                            best_feat = fj
                            t = prev_x + (x_next - prev_x) / 2.0
                            if t >= x_next:
                                # midpoint rounded up to the next value; pull it
                                # back so the `x <= thr` rule matches the scan
                                t = prev_x
                            best_thr = t
                            best_ls = ls
                            best_ls2 = ls2
                    prev_x = x_next

        if best_feat < 0:
            for i in range(start, end):
                train_pred[order[0, i]] = mean
            continue

        importance[best_feat] += best_gain
        xbest = XT[best_feat]
        n_left = 0
        for j in range(f):
            a = 0
            b = 0
            for i in range(start, end):
                r = order[j, i]
                if xbest[r] <= best_thr:
                    scratch_l[a] = r
                    a += 1
                else:
                    scratch_r[b] = r
                    b += 1
            for i in range(a):
                order[j, start + i] = scratch_l[i]
            for i in range(b):
                order[j, start + a + i] = scratch_r[i]
            n_left = a

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feat[node] = best_feat
        thr[node] = best_thr
        left[node] = lid
        right[node] = rid

        top += 1
        stack_i[top, 0] = rid
        stack_i[top, 1] = start + n_left
        stack_i[top, 2] = end
        stack_i[top, 3] = depth + 1
        stack_f[top, 0] = s - best_ls
        stack_f[top, 1] = s2 - best_ls2
        top += 1
        stack_i[top, 0] = lid
        stack_i[top, 1] = start
        stack_i[top, 2] = start + n_left
        stack_i[top, 3] = depth + 1
        stack_f[top, 0] = best_ls
        stack_f[top, 1] = best_ls2

    return (
        feat[:n_nodes].copy(),
        thr[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        importance,
        train_pred,
    )


@njit(cache=True)
def _predict_kernel(feat, thr, left, right, value, X):
    m = X.shape[0]
    out = np.empty(m, np.float64)
    for i in range(m):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def presort_features(X: np.ndarray) -> np.ndarray:
    """Stable per-feature argsort, shared by every tree grown on X."""
    n, f = X.shape
    out = np.empty((f, n), dtype=np.int32)
    for j in range(f):
        out[j] = np.argsort(X[:, j], kind="stable").astype(np.int32)
    return out


@dataclass
class RegressionTree:
    """A fitted tree as flat node arrays (feature < 0 marks a leaf)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return _predict_kernel(self.feature, self.threshold, self.left, self.right, self.value, X)


@dataclass
class TreeFit:
    """Tree plus fit byproducts used by the ensemble layer."""

    tree: RegressionTree
    importance: np.ndarray  # per-feature total variance reduction (un-normalized)
    train_pred: np.ndarray  # leaf value per training row (rows not sampled get 0)


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    feature_subset_size: Optional[int] = None,
    seed: int = 0,
    presort: Optional[np.ndarray] = None,
    counts: Optional[np.ndarray] = None,
) -> TreeFit:
    """Fit one regression tree.

    `counts` gives each row's multiplicity in the training sample (bootstrap);
    None means every row once. `presort` may be shared across trees grown on
    the same X.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64))
    n, f = X.shape
    if n < 1:
        raise ValueError("need at least one training row")
    if presort is None:
        presort = presort_features(X)
    if counts is None:
        counts = np.ones(n, dtype=np.int64)
    n_sample = int(counts.sum())
    depth = UNLIMITED_DEPTH if max_depth is None else np.int64(max_depth)
    subset = np.int64(f if feature_subset_size is None else feature_subset_size)
    xt = np.ascontiguousarray(X.T)
    feat, thr, left, right, value, importance, train_pred = _fit_tree_kernel(
        xt, y, presort, counts, np.int64(n_sample), depth, np.int64(min_samples_leaf), subset, U64(seed)
    )
    return TreeFit(RegressionTree(feat, thr, left, right, value), importance, train_pred)


def tree_to_node_list(tree: RegressionTree) -> List[dict]:
    """Node list for model persistence (decimal strings, 17 significant digits)."""
    nodes = []
    for i in range(tree.n_nodes):
        if tree.feature[i] < 0:
            nodes.append({"leaf": f"{tree.value[i]:.17g}"})
        else:
            nodes.append(
                {
                    "feature": int(tree.feature[i]),
                    "threshold": f"{tree.threshold[i]:.17g}",
                    "left": int(tree.left[i]),
                    "right": int(tree.right[i]),
                }
            )
    return nodes


def tree_from_node_list(nodes: List[dict]) -> RegressionTree:
    k = len(nodes)
    feature = np.full(k, -1, np.int32)
    threshold = np.zeros(k, np.float64)
    left = np.full(k, -1, np.int32)
    right = np.full(k, -1, np.int32)
    value = np.zeros(k, np.float64)
    for i, node in enumerate(nodes):
        if "leaf" in node:
            value[i] = float(node["leaf"])
        else:
            feature[i] = node["feature"]
            threshold[i] = float(node["threshold"])
            left[i] = node["left"]
            right[i] = node["right"]
    return RegressionTree(feature, threshold, left, right, value)
