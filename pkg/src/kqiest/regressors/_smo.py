"""SMO solver for the epsilon-SVR dual.

The 2n-variable form is used: beta = [alpha; alpha*], sign z = [+1; -1],
Q_st = z_s z_t K(r_s, r_t) with r = t mod n, linear term
p = [eps - y; eps + y], constraint sum z_t beta_t = 0, 0 <= beta <= C.
Working pairs are chosen with second-order information.
"""

import numpy as np
from numba import njit

POLY, RBF, SIGMOID = 0, 1, 2
TAU = 1e-12


@njit(cache=True)
def kernel_value(a, b, kernel, gamma, coef0, degree):
    if kernel == RBF:
        acc = 0.0
        for j in range(a.shape[0]):
            diff = a[j] - b[j]
            acc += diff * diff
        return np.exp(-gamma * acc)
    dot = 0.0
    for j in range(a.shape[0]):
        dot += a[j] * b[j]
    if kernel == POLY:
        return (gamma * dot + coef0) ** degree
    return np.tanh(gamma * dot + coef0)


@njit(cache=True)
def kernel_matrix(A, B, kernel, gamma, coef0, degree):
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            out[i, j] = kernel_value(A[i], B[j], kernel, gamma, coef0, degree)
    return out


@njit(cache=True)
def _column(X, K, dense, r, out, kernel, gamma, coef0, degree):
    """Kernel column r: a row view of the (symmetric) dense matrix, else computed into out."""
    if dense:
        return K[r]
    for t in range(out.shape[0]):
        out[t] = kernel_value(X[t], X[r], kernel, gamma, coef0, degree)
    return out


@njit(cache=True)
def solve_svr(X, K, dense, y, eps, C, tol, max_iter, kernel, gamma, coef0, degree):
    """Returns (beta, rho, n_iter, converged, gap, objective)."""
    n = y.shape[0]
    l2 = 2 * n
    beta = np.zeros(l2)
    z = np.empty(l2)
    p = np.empty(l2)
    G = np.empty(l2)
    for i in range(n):
        z[i] = 1.0
        z[i + n] = -1.0
        p[i] = eps - y[i]
        p[i + n] = eps + y[i]
    for t in range(l2):
        G[t] = p[t]
    diag = np.empty(n)
    for i in range(n):
        diag[i] = kernel_value(X[i], X[i], kernel, gamma, coef0, degree) if not dense else K[i, i]

    buf_i = np.empty(n)
    buf_j = np.empty(n)
    col_i = buf_i
    col_j = buf_j
    it = 0
    gap = np.inf
    converged = False
    while it < max_iter:
        # i: maximal violator in I_up; the two halves are scanned without t % n
        gmax = -np.inf
        i = -1
        for t in range(n):
            if beta[t] < C:
                v = -G[t]
                if v >= gmax:
                    gmax = v
                    i = t
        for t in range(n, l2):
            if beta[t] > 0:
                v = G[t]
                if v >= gmax:
                    gmax = v
                    i = t
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        if i >= 0:
            ri = i % n
            col_i = _column(X, K, dense, ri, buf_i, kernel, gamma, coef0, degree)
            di_ = diag[ri]
            for half in range(2):
                off = half * n
                for rt in range(n):
                    t = off + rt
                    if half == 0:
                        if not beta[t] > 0:
                            continue
                        v = G[t]
                    else:
                        if not beta[t] < C:
                            continue
                        v = -G[t]
                    if v >= gmax2:
                        gmax2 = v
                    b = gmax + v
                    if b > 0:
                        # z_i z_t Q_it = K(ri, rt)
                        a = di_ + diag[rt] - 2.0 * col_i[rt]
                        if a <= 0:
                            a = TAU
                        o = -(b * b) / a
                        if o <= obj_min:
                            obj_min = o
                            j = t
        gap = gmax + gmax2
        if gap < tol or j < 0:
            converged = gap < tol
            break
        it += 1

        ri = i % n
        rj = j % n
        col_j = _column(X, K, dense, rj, buf_j, kernel, gamma, coef0, degree)
        Qij = z[i] * z[j] * col_i[rj]
        Qii = diag[ri]
        Qjj = diag[rj]
        old_i = beta[i]
        old_j = beta[j]
        if z[i] != z[j]:
            quad = Qii + Qjj + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = beta[i] - beta[j]
            beta[i] += delta
            beta[j] += delta
            if diff > 0:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = diff
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = -diff
            if diff > 0:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = C - diff
            else:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = C + diff
        else:
            quad = Qii + Qjj - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = beta[i] + beta[j]
            beta[i] -= delta
            beta[j] += delta
            if total > C:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = total - C
            else:
                if beta[j] < 0:
                    beta[j] = 0.0
                    beta[i] = total
            if total > C:
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = total - C
            else:
                if beta[i] < 0:
                    beta[i] = 0.0
                    beta[j] = total
        di = beta[i] - old_i
        dj = beta[j] - old_j
        ci = z[i] * di
        cj = z[j] * dj
        for rt in range(n):
            d = ci * col_i[rt] + cj * col_j[rt]
            G[rt] += d
            G[rt + n] -= d

    # offset from free variables, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    n_free = 0
    s_free = 0.0
    for t in range(l2):
        yg = z[t] * G[t]
        if beta[t] >= C:
            if z[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif beta[t] <= 0:
            if z[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            s_free += yg
    if n_free > 0:
        rho = s_free / n_free
    else:
        rho = 0.5 * (ub + lb)

    obj = 0.0
    for t in range(l2):
        obj += beta[t] * (G[t] + p[t])
    return beta, rho, it, converged, gap, 0.5 * obj
