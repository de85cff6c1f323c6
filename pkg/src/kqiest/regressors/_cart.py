"""Weighted CART regression tree kernel (variance-reduction splits)."""

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True)
def build_tree(X, y, w, max_depth, feature_order):
    """Grow a regression tree on the rows with positive weight.

    Features are scanned in ``feature_order``; an exact tie in split score
    keeps the earlier feature and shares the impurity-decrease credit
    equally between the tied features.

    Returns (feature, threshold, left, right, value, n_nodes, importance)
    where importance[f] is the summed weighted SSE decrease credited to f.
    """
    n, d = X.shape
    rows = np.empty(n, np.int64)
    m = 0
    for i in range(n):
        if w[i] > 0.0:
            rows[m] = i
            m += 1
    rows = rows[:m]

    cap = 2 * m + 1
    feature = np.full(cap, LEAF, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, np.int64)
    right = np.full(cap, LEAF, np.int64)
    value = np.zeros(cap)
    importance = np.zeros(d)

    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    vals = np.empty(m)
    tied = np.empty(d, np.int64)
    tmp = np.empty(m, np.int64)

    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        size = hi - lo

        W = 0.0
        S = 0.0
        ymin = np.inf
        ymax = -np.inf
        for k in range(lo, hi):
            r = rows[k]
            W += w[r]
            S += w[r] * y[r]
            if y[r] < ymin:
                ymin = y[r]
            if y[r] > ymax:
                ymax = y[r]
        value[node] = S / W
        if size < 2 or depth >= max_depth or ymin == ymax:
            continue

        best = -np.inf
        best_f = -1
        best_thr = 0.0
        n_tied = 0
        for fi in range(d):
            f = feature_order[fi]
            for k in range(size):
                vals[k] = X[rows[lo + k], f]
            order = np.argsort(vals[:size], kind="mergesort")
            wl = 0.0
            sl = 0.0
            f_best = -np.inf
            f_thr = 0.0
            for k in range(size - 1):
                r = rows[lo + order[k]]
                wl += w[r]
                sl += w[r] * y[r]
                v0 = vals[order[k]]
                v1 = vals[order[k + 1]]
                if v0 < v1:
                    wr = W - wl
                    sr = S - sl
                    score = sl * sl / wl + sr * sr / wr
                    if score > f_best:
                        f_best = score
                        mid = 0.5 * (v0 + v1)
                        if mid >= v1:
                            mid = v0
                        f_thr = mid
            if f_best == -np.inf:
                continue
            if f_best > best:
                best = f_best
                best_f = f
                best_thr = f_thr
                tied[0] = f
                n_tied = 1
            elif f_best == best:
                tied[n_tied] = f
                n_tied += 1

        if best_f < 0:
            continue
        gain = best - S * S / W
        if not gain > 0.0:
            continue

        share = gain / n_tied
        for t in range(n_tied):
            importance[tied[t]] += share

        # stable partition of rows[lo:hi]
        for k in range(size):
            tmp[k] = rows[lo + k]
        nl = 0
        for k in range(size):
            if X[tmp[k], best_f] <= best_thr:
                rows[lo + nl] = tmp[k]
                nl += 1
        q = nl
        for k in range(size):
            if not X[tmp[k], best_f] <= best_thr:
                rows[lo + q] = tmp[k]
                q += 1
        feature[node] = best_f
        threshold[node] = best_thr
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        st_node[top] = r_id
        st_lo[top] = lo + nl
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = l_id
        st_lo[top] = lo
        st_hi[top] = lo + nl
        st_depth[top] = depth + 1
        top += 1

    return feature, threshold, left, right, value, n_nodes, importance


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out
