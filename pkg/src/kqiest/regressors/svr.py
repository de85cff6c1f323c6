"""Epsilon-insensitive support vector regression."""

from __future__ import annotations

import numpy as np

from ._smo import POLY, RBF, SIGMOID, kernel_matrix, solve_svr

KERNELS = {"poly": POLY, "rbf": RBF, "sigmoid": SIGMOID}
# above this many rows kernel columns are computed on demand
DENSE_LIMIT = 4000


class SVRRegressor:
    """epsilon-SVR trained by SMO.

    gamma follows the 1 / (n_features * var(X)) convention and coef0 is 0.
    ``converged_`` is False when the iteration cap stopped the solver.
    """

    def __init__(self, kernel="rbf", degree=3, epsilon=0.1, C=1.0, tol=1e-3, max_iter=100_000):
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}")
        self.kernel = kernel
        self.degree = degree
        self.epsilon = epsilon
        self.C = C
        self.tol = tol
        self.max_iter = max_iter

    def _kernel_args(self):
        return KERNELS[self.kernel], self.gamma_, 0.0, float(self.degree)

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        var = X.var()
        self.gamma_ = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        args = self._kernel_args()
        dense = len(y) <= DENSE_LIMIT
        K = kernel_matrix(X, X, *args) if dense else np.empty((0, 0))
        beta, rho, n_iter, converged, gap, objective = solve_svr(
            X, K, dense, y, float(self.epsilon), float(self.C), self.tol, self.max_iter, *args
        )
        n = len(y)
        coef = beta[:n] - beta[n:]
        support = np.flatnonzero(coef != 0.0)
        self.dual_ = beta
        self.support_ = support
        self.support_vectors_ = X[support]
        self.dual_coef_ = coef[support]
        self.intercept_ = -float(rho)
        self.n_iter_ = int(n_iter)
        self.converged_ = bool(converged)
        self.kkt_gap_ = float(gap)
        self.objective_ = float(objective)
        return self

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        if len(self.dual_coef_) == 0:
            return np.full(X.shape[0], self.intercept_)
        K = kernel_matrix(X, self.support_vectors_, *self._kernel_args())
        return K @ self.dual_coef_ + self.intercept_

    def get_state(self) -> dict:
        return {
            "gamma": self.gamma_,
            "support_vectors": self.support_vectors_.tolist(),
            "dual_coef": self.dual_coef_.tolist(),
            "intercept": self.intercept_,
            "converged": self.converged_,
            "n_iter": self.n_iter_,
        }

    def set_state(self, state: dict):
        self.gamma_ = float(state["gamma"])
        sv = np.asarray(state["support_vectors"], float)
        self.support_vectors_ = sv.reshape(len(state["dual_coef"]), -1) if sv.size else sv.reshape(0, 0)
        self.dual_coef_ = np.asarray(state["dual_coef"], float)
        self.intercept_ = float(state["intercept"])
        self.converged_ = bool(state["converged"])
        self.n_iter_ = int(state["n_iter"])
        return self
