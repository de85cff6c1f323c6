"""KD-tree with Minkowski-p k-nearest-neighbour queries.

Distances are compared in p-th power space. Neighbours are ordered by
(distance, training index), so the result never depends on the tree layout.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _pow(a, p):
    if p == 1.0:
        return a
    if p == 2.0:
        return a * a
    if p == 3.0:
        return a * a * a
    return a ** p


@njit(cache=True)
def build_kdtree(X, leaf_size):
    """Median splits on the widest dimension until nodes hold <= leaf_size points.

    Returns (perm, start, end, left, right, lo, hi, n_nodes); lo/hi are the
    per-node bounding boxes.
    """
    n, d = X.shape
    perm = np.arange(n)
    cap = 2 * max(n // max(leaf_size, 1), 1) * 2 + 3
    cap = max(cap, 2 * n + 1)
    start = np.zeros(cap, np.int64)
    end = np.zeros(cap, np.int64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    lo = np.zeros((cap, d))
    hi = np.zeros((cap, d))

    stack = np.empty(cap, np.int64)
    start[0] = 0
    end[0] = n
    stack[0] = 0
    top = 1
    n_nodes = 1
    buf = np.empty(n)
    while top > 0:
        top -= 1
        node = stack[top]
        s = start[node]
        e = end[node]
        for j in range(d):
            mn = np.inf
            mx = -np.inf
            for k in range(s, e):
                v = X[perm[k], j]
                if v < mn:
                    mn = v
                if v > mx:
                    mx = v
            lo[node, j] = mn
            hi[node, j] = mx
        m = e - s
        if m <= leaf_size:
            continue
        dim = 0
        spread = -1.0
        for j in range(d):
            if hi[node, j] - lo[node, j] > spread:
                spread = hi[node, j] - lo[node, j]
                dim = j
        if spread <= 0.0:
            continue
        for k in range(m):
            buf[k] = X[perm[s + k], dim]
        order = np.argsort(buf[:m], kind="mergesort")
        seg = perm[s:e].copy()
        for k in range(m):
            perm[s + k] = seg[order[k]]
        half = m // 2
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        start[l_id] = s
        end[l_id] = s + half
        start[r_id] = s + half
        end[r_id] = e
        stack[top] = l_id
        top += 1
        stack[top] = r_id
        top += 1
    return perm, start, end, left, right, lo, hi, n_nodes


@njit(cache=True)
def _box_dist(q, lo, hi, node, p):
    acc = 0.0
    for j in range(q.shape[0]):
        if q[j] < lo[node, j]:
            acc += _pow(lo[node, j] - q[j], p)
        elif q[j] > hi[node, j]:
            acc += _pow(q[j] - hi[node, j], p)
    return acc


@njit(cache=True)
def _better(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(cache=True)
def query_kdtree(X, perm, start, end, left, right, lo, hi, Q, k, p):
    """Return (indices, pdist) of shape (m, k), each row sorted by (dist, index)."""
    m = Q.shape[0]
    d = X.shape[1]
    out_idx = np.empty((m, k), np.int64)
    out_dist = np.empty((m, k))
    stack = np.empty(start.shape[0] + 1, np.int64)
    for qi in range(m):
        q = Q[qi]
        bd = np.full(k, np.inf)
        bi = np.full(k, np.iinfo(np.int64).max)
        count = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if count == k and _box_dist(q, lo, hi, node, p) > bd[k - 1]:
                continue
            if left[node] == -1:
                for t in range(start[node], end[node]):
                    idx = perm[t]
                    acc = 0.0
                    for j in range(d):
                        acc += _pow(abs(X[idx, j] - q[j]), p)
                    if count < k or _better(acc, idx, bd[k - 1], bi[k - 1]):
                        pos = count if count < k else k - 1
                        while pos > 0 and _better(acc, idx, bd[pos - 1], bi[pos - 1]):
                            bd[pos] = bd[pos - 1]
                            bi[pos] = bi[pos - 1]
                            pos -= 1
                        bd[pos] = acc
                        bi[pos] = idx
                        if count < k:
                            count += 1
            else:
                a = left[node]
                b = right[node]
                # push the farther child first so the nearer one is explored first
                if _box_dist(q, lo, hi, a, p) <= _box_dist(q, lo, hi, b, p):
                    stack[top] = b
                    stack[top + 1] = a
                else:
                    stack[top] = a
                    stack[top + 1] = b
                top += 2
        out_idx[qi] = bi
        out_dist[qi] = bd
    return out_idx, out_dist


@njit(cache=True)
def mean_of_neighbors(y, idx):
    m, k = idx.shape
    out = np.empty(m)
    for i in range(m):
        acc = 0.0
        for j in range(k):
            acc += y[idx[i, j]]
        out[i] = acc / k
    return out
