import numpy as np

from ._kdtree import build_kdtree, mean_of_neighbors, query_kdtree


class KDTree:
    def __init__(self, X, leaf_size=30):
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.data = np.ascontiguousarray(X, dtype=float)
        self.leaf_size = int(leaf_size)
        perm, start, end, left, right, lo, hi, n_nodes = build_kdtree(self.data, self.leaf_size)
        self._arrays = (perm, start[:n_nodes], end[:n_nodes], left[:n_nodes], right[:n_nodes],
                        lo[:n_nodes], hi[:n_nodes])

    def query(self, Q, k, p=2.0):
        """Indices and Minkowski distances of the k nearest rows, nearest first."""
        Q = np.ascontiguousarray(Q, dtype=float)
        if k > self.data.shape[0]:
            raise ValueError(f"k={k} exceeds the {self.data.shape[0]} indexed points")
        perm, start, end, left, right, lo, hi = self._arrays
        idx, pdist = query_kdtree(self.data, perm, start, end, left, right, lo, hi, Q, int(k), float(p))
        return idx, pdist ** (1.0 / p)


class KNeighborsRegressor:
    """Uniform-weight k-NN regression over a KD-tree.

    Distance ties go to the lower training index, so ``leaf_size`` changes
    only search cost, never predictions.
    """

    def __init__(self, n_neighbors=5, p=2, leaf_size=30):
        self.n_neighbors = n_neighbors
        self.p = p
        self.leaf_size = leaf_size

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=float)
        if self.n_neighbors > X.shape[0]:
            raise ValueError(f"n_neighbors={self.n_neighbors} > n_samples={X.shape[0]}")
        self.tree_ = KDTree(X, self.leaf_size)
        self.y_ = np.ascontiguousarray(y, dtype=float)
        return self

    def kneighbors(self, X):
        return self.tree_.query(X, self.n_neighbors, self.p)

    def predict(self, X):
        idx, _ = self.kneighbors(X)
        return mean_of_neighbors(self.y_, idx)

    def get_state(self) -> dict:
        return {"X": self.tree_.data.tolist(), "y": self.y_.tolist()}

    def set_state(self, state: dict):
        return self.fit(np.asarray(state["X"], float), np.asarray(state["y"], float))
