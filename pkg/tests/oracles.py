"""Independent reference computations used by the unit and acceptance tests.

None of these call into kqiest's solvers; each takes a different
numerical route to the same answer.
"""

import numpy as np


def ridge_gd(X, y, alpha, fit_intercept, tol=1e-13, max_iter=200_000):
    """Minimize ||y - Xw - b||^2 + alpha ||w||^2 by accelerated gradient descent."""
    n, d = X.shape
    A = np.column_stack([X, np.ones(n)]) if fit_intercept else X
    penalty = np.full(A.shape[1], float(alpha))
    if fit_intercept:
        penalty[-1] = 0.0
    H = 2.0 * (A.T @ A + np.diag(penalty))
    ev = np.linalg.eigvalsh(H)
    L, mu = ev[-1], max(ev[0], 1e-12)
    momentum = (np.sqrt(L) - np.sqrt(mu)) / (np.sqrt(L) + np.sqrt(mu))
    w = np.zeros(A.shape[1])
    v = w.copy()
    for _ in range(max_iter):
        g = 2.0 * (A.T @ (A @ v - y)) + 2.0 * penalty * v
        w_next = v - g / L
        v = w_next + momentum * (w_next - w)
        if np.max(np.abs(w_next - w)) < tol:
            w = w_next
            break
        w = w_next
    return (w[:-1], w[-1]) if fit_intercept else (w, 0.0)


def knn_brute(X, y, Q, k, p):
    """Mean target of the k nearest rows by a full scan; ties go to the lower index."""
    out = np.empty(len(Q))
    for i, q in enumerate(Q):
        dist = np.sum(np.abs(X - q) ** p, axis=1) ** (1.0 / p)
        order = np.lexsort((np.arange(len(X)), dist))
        out[i] = y[order[:k]].mean()
    return out


def finite_diff_grad(f, params, h=1e-6):
    """Central differences of scalar f over every entry of every array in params."""
    grads = []
    for P in params:
        G = np.zeros_like(P)
        it = np.nditer(P, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = P[idx]
            P[idx] = old + h
            up = f()
            P[idx] = old - h
            down = f()
            P[idx] = old
            G[idx] = (up - down) / (2 * h)
        grads.append(G)
    return grads


def rbf_kernel(X, gamma):
    sq = np.sum(X ** 2, axis=1)
    return np.exp(-gamma * (sq[:, None] + sq[None, :] - 2 * X @ X.T))


def svr_dual_qp(K, y, eps, C):
    """epsilon-SVR dual solved as a dense QP with cvxopt's interior point method.

    Returns (beta, objective) for min 1/2 b'Qb + p'b, z'b = 0, 0 <= b <= C.
    """
    from cvxopt import matrix, solvers

    n = len(y)
    z = np.r_[np.ones(n), -np.ones(n)]
    Q = np.block([[K, -K], [-K, K]])
    p = np.r_[eps - y, eps + y]
    G = np.vstack([-np.eye(2 * n), np.eye(2 * n)])
    h = np.r_[np.zeros(2 * n), np.full(2 * n, C)]
    solvers.options.update({"show_progress": False, "abstol": 1e-12, "reltol": 1e-12,
                            "feastol": 1e-12, "maxiters": 200})
    sol = solvers.qp(matrix(Q + 1e-12 * np.eye(2 * n)), matrix(p), matrix(G), matrix(h),
                     matrix(z[None, :]), matrix(0.0))
    beta = np.array(sol["x"]).ravel()
    return beta, 0.5 * beta @ Q @ beta + p @ beta


def svr_dual_objective(K, y, eps, beta):
    n = len(y)
    Q = np.block([[K, -K], [-K, K]])
    p = np.r_[eps - y, eps + y]
    return 0.5 * beta @ Q @ beta + p @ beta


def best_stump(x, y):
    """Exhaustive search for the single split minimizing the summed squared error."""
    order = np.argsort(x, kind="mergesort")
    xs, ys = x[order], y[order]
    best = (np.sum((y - y.mean()) ** 2), None)
    for i in range(1, len(xs)):
        if xs[i] == xs[i - 1]:
            continue
        left, right = ys[:i], ys[i:]
        sse = np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2)
        if sse < best[0] - 1e-12:
            best = (sse, 0.5 * (xs[i - 1] + xs[i]))
    return best


def weighted_lower_median(values, weights):
    """Smallest value whose cumulative weight reaches half the total."""
    order = np.argsort(values, kind="mergesort")
    cw = np.cumsum(weights[order])
    return values[order][np.searchsorted(cw, 0.5 * cw[-1])]
