# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics mirror ``adstrain._pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libcpp.unordered_map cimport unordered_map
from libc.math cimport INFINITY

cnp.import_array()


def zipf_ranks(const double[::1] cdf, const double[::1] u):
    cdef Py_ssize_t n = cdf.shape[0]
    cdef Py_ssize_t m = u.shape[0]
    out = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef Py_ssize_t i, lo, hi, mid
    cdef double x
    for i in range(m):
        x = u[i]
        lo = 0
        hi = n
        # first index with cdf > x
        while lo < hi:
            mid = (lo + hi) >> 1
            if cdf[mid] > x:
                hi = mid
            else:
                lo = mid + 1
        if lo >= n:
            lo = n - 1
        o[i] = lo
    return out


def dedup_first(const cnp.int64_t[::1] values):
    cdef Py_ssize_t n = values.shape[0]
    cdef unordered_map[cnp.int64_t, cnp.int64_t] seen
    inverse = np.empty(n, dtype=np.int64)
    uniq = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] inv = inverse
    cdef cnp.int64_t[::1] uq = uniq
    cdef Py_ssize_t i
    cdef cnp.int64_t k = 0
    cdef cnp.int64_t v
    seen.reserve(n)
    for i in range(n):
        v = values[i]
        it = seen.find(v)
        if it == seen.end():
            seen[v] = k
            uq[k] = v
            inv[i] = k
            k += 1
        else:
            inv[i] = seen[v]
    return uniq[:k].copy(), inverse


def node_bytes(const double[::1] row_weight, const cnp.int64_t[::1] row_node,
               Py_ssize_t n_nodes, double scale):
    out = np.zeros(n_nodes, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t r
    for r in range(row_weight.shape[0]):
        o[row_node[r]] += row_weight[r] * scale
    return out


def best_combination(list loads, list mems, list buckets, const double[::1] factors,
                     double capacity):
    """Exhaustive search over one option per table.

    Returns (objective, index tuple, evaluated) for the lexicographically first
    minimum, or (inf, None, evaluated) if nothing fits in memory.
    """
    cdef Py_ssize_t T = len(loads)
    if T == 0:
        return 0.0, (), 1
    cdef Py_ssize_t N = (<cnp.ndarray>loads[0]).shape[1]
    cdef Py_ssize_t t, i, o
    cdef list lv = [np.ascontiguousarray(a, dtype=np.float64) for a in loads]
    cdef list mv = [np.ascontiguousarray(a, dtype=np.float64) for a in mems]
    cdef list bv = [np.ascontiguousarray(a, dtype=np.int64) for a in buckets]
    counts = np.array([a.shape[0] for a in lv], dtype=np.int64)
    cdef cnp.int64_t[::1] cnt = counts

    # flatten options into one buffer so the loop stays in C
    offs = np.zeros(T + 1, dtype=np.int64)
    for t in range(T):
        offs[t + 1] = offs[t] + cnt[t]
    cdef cnp.int64_t[::1] off = offs
    all_l = np.concatenate(lv, axis=0) if T else np.zeros((0, N))
    all_m = np.concatenate(mv, axis=0) if T else np.zeros((0, N))
    all_b = np.concatenate(bv) if T else np.zeros(0, dtype=np.int64)
    cdef double[:, ::1] L = all_l
    cdef double[:, ::1] M = all_m
    cdef cnp.int64_t[::1] B = all_b

    pl = np.zeros((T + 1, N), dtype=np.float64)
    pm = np.zeros((T + 1, N), dtype=np.float64)
    pb = np.zeros(T + 1, dtype=np.int64)
    pmax = np.zeros(T + 1, dtype=np.float64)
    cdef double[:, ::1] PL = pl
    cdef double[:, ::1] PM = pm
    cdef cnp.int64_t[::1] PB = pb
    cdef double[::1] PMAX = pmax
    idx = np.zeros(T, dtype=np.int64)
    cdef cnp.int64_t[::1] ix = idx
    best_idx = np.zeros(T, dtype=np.int64)
    cdef cnp.int64_t[::1] bix = best_idx

    cdef double best = INFINITY
    cdef bint found = False
    cdef long long evaluated = 0
    cdef double v, mx, obj
    cdef cnp.int64_t row, bk
    cdef bint ok
    t = 0
    # depth-first odometer; ix[t] is the next option to try at depth t
    while t >= 0:
        if ix[t] >= cnt[t]:
            ix[t] = 0
            t -= 1
            if t >= 0:
                ix[t] += 1
            continue
        row = off[t] + ix[t]
        ok = True
        mx = PMAX[t]
        for i in range(N):
            v = PL[t, i] + L[row, i]
            PL[t + 1, i] = v
            if v > mx:
                mx = v
            v = PM[t, i] + M[row, i]
            PM[t + 1, i] = v
            if v > capacity:
                ok = False
        bk = PB[t]
        if B[row] > bk:
            bk = B[row]
        PB[t + 1] = bk
        PMAX[t + 1] = mx
        if not ok or mx * factors[bk] > best:
            ix[t] += 1
            continue
        if t == T - 1:
            evaluated += 1
            obj = mx * factors[bk]
            if obj < best or not found:
                best = obj
                found = True
                for i in range(T):
                    bix[i] = ix[i]
            ix[t] += 1
        else:
            t += 1
            ix[t] = 0
    if not found:
        return INFINITY, None, evaluated
    return best, tuple(int(x) for x in best_idx), evaluated
