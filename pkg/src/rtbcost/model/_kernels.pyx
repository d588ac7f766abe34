# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree kernels. Must stay bit-compatible with ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint8_t, uint64_t
from libc.string cimport memset

cnp.import_array()


cdef inline uint64_t _splitmix64(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


def build_tree(X, y, sample, int n_classes, n_levels, int max_depth, int min_leaf,
               int max_features, seed):
    cdef const uint8_t[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.uint8)
    cdef const int32_t[::1] yv = np.ascontiguousarray(y, dtype=np.int32)
    cdef const int64_t[::1] lv = np.ascontiguousarray(n_levels, dtype=np.int64)
    idx_arr = np.array(sample, dtype=np.intp, copy=True)
    cdef cnp.intp_t[::1] idx = idx_arr

    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t m = Xv.shape[1]
    cdef int k = n_classes
    cdef Py_ssize_t max_nodes = 2 * n + 1

    feature_a = np.full(max_nodes, -1, np.int32)
    threshold_a = np.zeros(max_nodes, np.int32)
    left_a = np.full(max_nodes, -1, np.int32)
    right_a = np.full(max_nodes, -1, np.int32)
    value_a = np.zeros((max_nodes, k), np.float64)
    cdef int32_t[::1] feature = feature_a
    cdef int32_t[::1] threshold = threshold_a
    cdef int32_t[::1] left = left_a
    cdef int32_t[::1] right = right_a
    cdef double[:, ::1] value = value_a

    cdef int64_t L_max = 1
    cdef Py_ssize_t f_i
    for f_i in range(m):
        if lv[f_i] > L_max:
            L_max = lv[f_i]
    hist_a = np.zeros(L_max * k, np.int64)
    cdef int64_t[::1] hist = hist_a
    cdef int64_t[::1] counts = np.zeros(k, np.int64)
    cdef int64_t[::1] cum = np.zeros(k, np.int64)
    cdef int32_t[::1] perm = np.zeros(max(m, 1), np.int32)

    cdef Py_ssize_t[::1] st_start = np.zeros(max_nodes + 1, np.intp)
    cdef Py_ssize_t[::1] st_end = np.zeros(max_nodes + 1, np.intp)
    cdef Py_ssize_t[::1] st_depth = np.zeros(max_nodes + 1, np.intp)
    cdef Py_ssize_t[::1] st_parent = np.zeros(max_nodes + 1, np.intp)
    cdef Py_ssize_t[::1] st_left = np.zeros(max_nodes + 1, np.intp)

    cdef uint64_t rng = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t sp = 0, n_nodes = 0, node, start, end, depth, parent, is_left
    cdef Py_ssize_t nn, s, i, j, f, t, L, best_f, best_t, evaluated, nz, lo, hi, tmp
    cdef int c
    cdef int64_t maxc, sumsq, lt, n_left, n_right, sq_l, sq_r, r, d
    cdef double best_score, score
    cdef int32_t swap

    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_parent[0] = -1
    st_left[0] = 0
    sp = 1

    with nogil:
        while sp > 0:
            sp -= 1
            start = st_start[sp]
            end = st_end[sp]
            depth = st_depth[sp]
            parent = st_parent[sp]
            is_left = st_left[sp]
            node = n_nodes
            n_nodes += 1
            if parent >= 0:
                if is_left:
                    left[parent] = <int32_t>node
                else:
                    right[parent] = <int32_t>node

            for c in range(k):
                counts[c] = 0
            for s in range(start, end):
                counts[yv[idx[s]]] += 1
            nn = end - start
            maxc = 0
            sumsq = 0
            for c in range(k):
                value[node, c] = counts[c] / <double>nn
                sumsq += counts[c] * counts[c]
                if counts[c] > maxc:
                    maxc = counts[c]
            if nn < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or maxc == nn:
                continue

            best_score = sumsq / <double>nn
            best_f = -1
            best_t = -1
            for i in range(m):
                perm[i] = <int32_t>i
            evaluated = 0
            i = 0
            while i < m and evaluated < max_features:
                j = i + <Py_ssize_t>(_splitmix64(&rng) % <uint64_t>(m - i))
                swap = perm[i]
                perm[i] = perm[j]
                perm[j] = swap
                f = perm[i]
                i += 1
                L = lv[f]
                memset(&hist[0], 0, L * k * sizeof(int64_t))
                for s in range(start, end):
                    r = idx[s]
                    hist[Xv[r, f] * k + yv[r]] += 1
                nz = 0
                for t in range(L):
                    lt = 0
                    for c in range(k):
                        lt += hist[t * k + c]
                    if lt > 0:
                        nz += 1
                if nz <= 1:
                    continue
                evaluated += 1
                for c in range(k):
                    cum[c] = 0
                n_left = 0
                for t in range(L - 1):
                    lt = 0
                    for c in range(k):
                        cum[c] += hist[t * k + c]
                        lt += hist[t * k + c]
                    n_left += lt
                    if lt == 0:
                        continue
                    n_right = nn - n_left
                    if n_left < min_leaf or n_right < min_leaf:
                        continue
                    sq_l = 0
                    sq_r = 0
                    for c in range(k):
                        sq_l += cum[c] * cum[c]
                        d = counts[c] - cum[c]
                        sq_r += d * d
                    score = sq_l / <double>n_left + sq_r / <double>n_right
                    if score > best_score:
                        best_score = score
                        best_f = f
                        best_t = t
            if best_f < 0:
                continue

            feature[node] = <int32_t>best_f
            threshold[node] = <int32_t>best_t
            lo = start
            hi = end - 1
            while lo <= hi:
                if Xv[idx[lo], best_f] <= best_t:
                    lo += 1
                else:
                    tmp = idx[lo]
                    idx[lo] = idx[hi]
                    idx[hi] = tmp
                    hi -= 1
            # right child pushed first so the left subtree is numbered next
            st_start[sp] = lo
            st_end[sp] = end
            st_depth[sp] = depth + 1
            st_parent[sp] = node
            st_left[sp] = 0
            sp += 1
            st_start[sp] = start
            st_end[sp] = lo
            st_depth[sp] = depth + 1
            st_parent[sp] = node
            st_left[sp] = 1
            sp += 1

    return (feature_a[:n_nodes].copy(), threshold_a[:n_nodes].copy(), left_a[:n_nodes].copy(),
            right_a[:n_nodes].copy(), value_a[:n_nodes].copy())


def apply_tree(X, feature, threshold, left, right):
    cdef const uint8_t[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.uint8)
    cdef const int32_t[::1] fv = np.ascontiguousarray(feature, dtype=np.int32)
    cdef const int32_t[::1] tv = np.ascontiguousarray(threshold, dtype=np.int32)
    cdef const int32_t[::1] lv = np.ascontiguousarray(left, dtype=np.int32)
    cdef const int32_t[::1] rv = np.ascontiguousarray(right, dtype=np.int32)
    cdef Py_ssize_t n = Xv.shape[0], i
    out_a = np.zeros(n, np.int64)
    cdef int64_t[::1] out = out_a
    cdef int32_t node, f
    with nogil:
        for i in range(n):
            node = 0
            f = fv[node]
            while f >= 0:
                if Xv[i, f] <= tv[node]:
                    node = lv[node]
                else:
                    node = rv[node]
                f = fv[node]
            out[i] = node
    return out_a
