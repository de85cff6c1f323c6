import numpy as np


class RidgeRegressor:
    """L2-penalized least squares solved through the normal equations.

    With ``fit_intercept`` the data are centred first, so the intercept is
    never penalized.
    """

    def __init__(self, alpha=1.0, fit_intercept=True):
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        self.alpha = alpha
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.fit_intercept:
            x_mean = X.mean(axis=0)
            y_mean = y.mean()
            Xc = X - x_mean
            yc = y - y_mean
        else:
            Xc, yc = X, y
        A = Xc.T @ Xc + self.alpha * np.eye(X.shape[1])
        b = Xc.T @ yc
        try:
            coef = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            coef = np.linalg.pinv(A) @ b
        self.coef_ = coef
        self.intercept_ = float(y_mean - x_mean @ coef) if self.fit_intercept else 0.0
        return self

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_

    def get_state(self) -> dict:
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_}

    def set_state(self, state: dict):
        self.coef_ = np.asarray(state["coef"], float)
        self.intercept_ = float(state["intercept"])
        return self
