"""Regression trees, random forest and AdaBoost.R2."""

from __future__ import annotations

import numpy as np

from ._cart import LEAF, build_tree, predict_tree

UNLIMITED_DEPTH = 2**62


class RegressionTree:
    """CART regressor grown on (optionally weighted) rows."""

    def __init__(self, max_depth=None):
        self.max_depth = max_depth

    def fit(self, X, y, sample_weight=None, feature_order=None):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        w = np.ones(len(y)) if sample_weight is None else np.ascontiguousarray(sample_weight, float)
        order = np.arange(X.shape[1]) if feature_order is None else np.asarray(feature_order, np.int64)
        depth = UNLIMITED_DEPTH if self.max_depth is None else int(self.max_depth)
        feature, threshold, left, right, value, n_nodes, importance = build_tree(X, y, w, depth, order)
        self.feature_ = feature[:n_nodes]
        self.threshold_ = threshold[:n_nodes]
        self.left_ = left[:n_nodes]
        self.right_ = right[:n_nodes]
        self.value_ = value[:n_nodes]
        self.impurity_decrease_ = importance
        return self

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return predict_tree(self.feature_, self.threshold_, self.left_, self.right_, self.value_, X)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature_ == LEAF))

    def get_state(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "feature": self.feature_.tolist(),
            "threshold": self.threshold_.tolist(),
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "value": self.value_.tolist(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "RegressionTree":
        tree = cls(state["max_depth"])
        tree.feature_ = np.asarray(state["feature"], np.int64)
        tree.threshold_ = np.asarray(state["threshold"], float)
        tree.left_ = np.asarray(state["left"], np.int64)
        tree.right_ = np.asarray(state["right"], np.int64)
        tree.value_ = np.asarray(state["value"], float)
        return tree


def bootstrap_counts(rng: np.random.Generator, n: int, p=None) -> np.ndarray:
    draws = rng.choice(n, size=n, replace=True, p=p)
    return np.bincount(draws, minlength=n).astype(float)


class RandomForestRegressor:
    """Bagged CART trees, every feature considered at each split."""

    def __init__(self, n_estimators=100, max_depth=None, seed=0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.seed = seed

    def fit(self, X, y, feature_order=None):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        rng = np.random.default_rng(self.seed)
        self.trees_ = []
        importances = np.zeros(X.shape[1])
        for _ in range(self.n_estimators):
            w = bootstrap_counts(rng, len(y))
            tree = RegressionTree(self.max_depth).fit(X, y, w, feature_order)
            total = tree.impurity_decrease_.sum()
            if total > 0:
                importances += tree.impurity_decrease_ / total
            self.trees_.append(tree)
        total = importances.sum()
        self.feature_importances_ = importances / total if total > 0 else np.full(X.shape[1], 1.0 / X.shape[1])
        return self

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        acc = np.zeros(X.shape[0])
        for tree in self.trees_:
            acc += tree.predict(X)
        return acc / len(self.trees_)

    def get_state(self) -> dict:
        return {"trees": [t.get_state() for t in self.trees_]}

    def set_state(self, state: dict):
        self.trees_ = [RegressionTree.from_state(t) for t in state["trees"]]
        return self


class AdaBoostR2Regressor:
    """AdaBoost.R2 with linear loss and depth-3 trees.

    Each round fits a tree on a bootstrap drawn from the current sample
    weights. Rounds stop early on a perfect fit or when the weighted loss
    reaches 0.5.
    """

    def __init__(self, n_estimators=50, learning_rate=1.0, seed=0, base_depth=3):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.seed = seed
        self.base_depth = base_depth

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        n = len(y)
        rng = np.random.default_rng(self.seed)
        w = np.full(n, 1.0 / n)
        self.trees_ = []
        self.estimator_weights_ = []
        self.weight_sums_ = []
        for _ in range(self.n_estimators):
            counts = bootstrap_counts(rng, n, w)
            tree = RegressionTree(self.base_depth).fit(X, y, counts)
            err = np.abs(tree.predict(X) - y)
            max_err = err.max()
            if max_err == 0.0:
                self.trees_.append(tree)
                self.estimator_weights_.append(1.0)
                break
            loss = err / max_err
            avg_loss = float(np.dot(w, loss))
            if avg_loss <= 0.0:
                self.trees_.append(tree)
                self.estimator_weights_.append(1.0)
                break
            if avg_loss >= 0.5:
                if not self.trees_:
                    self.trees_.append(tree)
                    self.estimator_weights_.append(1.0)
                break
            beta = avg_loss / (1.0 - avg_loss)
            self.trees_.append(tree)
            self.estimator_weights_.append(self.learning_rate * np.log(1.0 / beta))
            w = w * np.power(beta, (1.0 - loss) * self.learning_rate)
            w /= w.sum()
            self.weight_sums_.append(float(w.sum()))
        self.estimator_weights_ = np.asarray(self.estimator_weights_)
        return self

    def predict(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        preds = np.column_stack([t.predict(X) for t in self.trees_])
        return weighted_median(preds, self.estimator_weights_)

    def get_state(self) -> dict:
        return {"trees": [t.get_state() for t in self.trees_],
                "estimator_weights": self.estimator_weights_.tolist()}

    def set_state(self, state: dict):
        self.trees_ = [RegressionTree.from_state(t) for t in state["trees"]]
        self.estimator_weights_ = np.asarray(state["estimator_weights"], float)
        return self


def weighted_median(preds: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise lower weighted median of ``preds`` (m x rounds)."""
    order = np.argsort(preds, axis=1, kind="stable")
    cum = np.cumsum(weights[order], axis=1)
    half = 0.5 * cum[:, -1][:, None]
    pos = np.argmax(cum >= half, axis=1)
    rows = np.arange(preds.shape[0])
    return preds[rows, order[rows, pos]]
