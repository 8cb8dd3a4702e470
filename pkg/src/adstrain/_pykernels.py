"""Pure numpy implementations of the hot loops in ``_ckernels.pyx``.

Both backends must return identical results (bit-for-bit for the float
reductions, since accumulation order is the same).
"""

import numpy as np


def zipf_ranks(cdf, u):
    cdf = np.asarray(cdf, dtype=np.float64)
    r = np.searchsorted(cdf, np.asarray(u, dtype=np.float64), side="right")
    return np.minimum(r, len(cdf) - 1).astype(np.int64)


def dedup_first(values):
    values = np.asarray(values, dtype=np.int64)
    if values.size == 0:
        return values.copy(), np.zeros(0, dtype=np.int64)
    uniq, first, inv = np.unique(values, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return uniq[order], rank[inv.reshape(-1)].astype(np.int64)


def node_bytes(row_weight, row_node, n_nodes, scale):
    w = np.asarray(row_weight, dtype=np.float64) * scale
    return np.bincount(np.asarray(row_node, dtype=np.int64), weights=w, minlength=n_nodes).astype(np.float64)


def best_combination(loads, mems, buckets, factors, capacity):
    T = len(loads)
    if T == 0:
        return 0.0, (), 1
    factors = np.asarray(factors, dtype=np.float64)
    N = np.asarray(loads[0]).shape[1]
    # prefix over all but the last table, in lexicographic (C) order
    pl = np.zeros((1, N))
    pm = np.zeros((1, N))
    pb = np.zeros(1, dtype=np.int64)
    for t in range(T - 1):
        lt = np.asarray(loads[t], dtype=np.float64)
        mt = np.asarray(mems[t], dtype=np.float64)
        bt = np.asarray(buckets[t], dtype=np.int64)
        pl = (pl[:, None, :] + lt[None, :, :]).reshape(-1, N)
        pm = (pm[:, None, :] + mt[None, :, :]).reshape(-1, N)
        pb = np.maximum(pb[:, None], bt[None, :]).reshape(-1)
    lt = np.asarray(loads[-1], dtype=np.float64)
    mt = np.asarray(mems[-1], dtype=np.float64)
    bt = np.asarray(buckets[-1], dtype=np.int64)
    K, O = pl.shape[0], lt.shape[0]
    obj = np.empty((K, O))
    for o in range(O):
        l = pl + lt[o]
        m = pm + mt[o]
        b = np.maximum(pb, bt[o])
        col = l.max(axis=1) * factors[b]
        col[(m > capacity).any(axis=1)] = np.inf
        obj[:, o] = col
    flat = obj.reshape(-1)
    if not np.isfinite(flat).any():
        return float("inf"), None, flat.size
    k = int(np.argmin(flat))
    idx = np.unravel_index(k, [np.asarray(a).shape[0] for a in loads])
    return float(flat[k]), tuple(int(i) for i in idx), flat.size
