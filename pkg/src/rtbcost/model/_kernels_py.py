"""Pure NumPy tree kernels; reference behaviour for the compiled ``_kernels``.

Inputs are small-integer coded matrices (uint8, one column per encoded
feature). A node split sends rows with ``x[f] <= t`` left. Split quality is
the Gini gain expressed as ``sum_c nL_c^2 / nL + sum_c nR_c^2 / nR`` computed
from integer counts, so both backends evaluate identical floating-point
expressions and grow identical trees for the same seed.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def build_tree(X, y, sample, n_classes, n_levels, max_depth, min_leaf, max_features, seed):
    """Grow one Gini tree over ``X[sample]``.

    Returns ``(feature, threshold, left, right, value)``; leaves have
    ``feature == -1`` and ``value`` holds per-node class frequencies.
    Nodes are numbered in preorder (left subtree first).
    """
    X = np.ascontiguousarray(X, dtype=np.uint8)
    y = np.ascontiguousarray(y, dtype=np.int32)
    n_levels = np.asarray(n_levels, dtype=np.int64)
    k = int(n_classes)
    m = X.shape[1]
    max_nodes = 2 * len(sample) + 1
    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.int32)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    value = np.zeros((max_nodes, k), np.float64)

    rng = int(seed) & _MASK
    stack = [(np.asarray(sample, dtype=np.intp), 0, -1, False)]
    n_nodes = 0
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left:
                left[parent] = node
            else:
                right[parent] = node
        yi = y[idx]
        counts = np.bincount(yi, minlength=k).astype(np.int64)
        nn = len(idx)
        value[node] = counts / nn
        if nn < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or counts.max() == nn:
            continue

        best_score = float(np.dot(counts, counts)) / nn
        best_f = best_t = -1
        perm = list(range(m))
        evaluated = i = 0
        while i < m and evaluated < max_features:
            rng, r = _splitmix64(rng)
            j = i + r % (m - i)
            perm[i], perm[j] = perm[j], perm[i]
            f = perm[i]
            i += 1
            L = int(n_levels[f])
            xi = X[idx, f].astype(np.int64)
            hist = np.bincount(xi * k + yi, minlength=L * k).reshape(L, k)
            level_tot = hist.sum(axis=1)
            if np.count_nonzero(level_tot) <= 1:
                continue
            evaluated += 1
            cum = np.cumsum(hist[:-1], axis=0)
            n_left = cum.sum(axis=1)
            n_right = nn - n_left
            ok = (level_tot[:-1] > 0) & (n_left >= min_leaf) & (n_right >= min_leaf)
            if not ok.any():
                continue
            sq_left = (cum * cum).sum(axis=1)
            rest = counts[None, :] - cum
            sq_right = (rest * rest).sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                score = sq_left / n_left + sq_right / n_right
            score = np.where(ok, score, -np.inf)
            t = int(np.argmax(score))
            if score[t] > best_score:
                best_score = float(score[t])
                best_f, best_t = f, t
        if best_f < 0:
            continue
        feature[node] = best_f
        threshold[node] = best_t
        go_left = X[idx, best_f] <= best_t
        stack.append((idx[~go_left], depth + 1, node, False))
        stack.append((idx[go_left], depth + 1, node, True))

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by each row of ``X``."""
    X = np.asarray(X, dtype=np.uint8)
    n = X.shape[0]
    node = np.zeros(n, np.int64)
    active = np.arange(n)
    while active.size:
        cur = node[active]
        f = feature[cur]
        internal = f >= 0
        active, cur, f = active[internal], cur[internal], f[internal]
        if not active.size:
            break
        go_left = X[active, f] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
    return node
