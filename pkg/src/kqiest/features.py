"""Feature strategies: passthrough, forest-importance selection, PCA extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .regressors.trees import RandomForestRegressor
from .schema import fit_inputs

STRATEGIES = ("No_FE", "FS", "FE")
PCA_RETENTION = 0.95
SELECTOR_TREES = 100
# cumulative-ratio slack so an exact 0.95 split is not lost to rounding
_RETENTION_SLACK = 1e-12


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class SelectorModel:
    feature_names: tuple[str, ...]
    importances: np.ndarray
    threshold: float
    selected: tuple[int, ...]

    @property
    def selected_names(self) -> tuple[str, ...]:
        return tuple(self.feature_names[i] for i in self.selected)

    def to_dict(self) -> dict:
        return {"kind": "selector", "feature_names": list(self.feature_names),
                "importances": self.importances.tolist(), "threshold": self.threshold,
                "selected": list(self.selected)}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectorModel":
        return cls(tuple(d["feature_names"]), np.asarray(d["importances"], float),
                   float(d["threshold"]), tuple(d["selected"]))


def fit_selector(X, y=None, seed: int = 0, feature_names: Sequence[str] | None = None,
                 n_trees: int = SELECTOR_TREES) -> SelectorModel:
    """Keep features whose forest importance reaches the mean importance.

    Importances are mean decrease in impurity from a bagged forest of
    unlimited-depth trees. Features are scanned in sorted-name order, so the
    importances follow the columns under any permutation.
    """
    X, y, ds_names = fit_inputs(X, y)
    if feature_names is None:
        feature_names = ds_names
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if d == 0:
        raise FeatureError("cannot select from zero features")
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i:04d}" for i in range(d))
    if len(names) != d:
        raise FeatureError("feature_names does not match the column count")
    canonical = np.array(sorted(range(d), key=lambda i: names[i]), dtype=np.int64)
    forest = RandomForestRegressor(n_trees, None, seed=seed).fit(X, y, feature_order=canonical)
    imp = forest.feature_importances_
    threshold = 1.0 / d  # mean of importances that sum to one
    selected = [i for i in range(d) if imp[i] >= threshold - 1e-12]
    if not selected:
        selected = [int(np.argmax(imp))]
    return SelectorModel(names, imp, threshold, tuple(selected))


def apply_selector(model: SelectorModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise FeatureError(
            f"selector was fitted on {len(model.feature_names)} columns, got shape {X.shape}")
    return X[:, sorted(model.selected)]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance_ratio: np.ndarray  # length d, descending
    k: int

    @property
    def cumulative_ratio(self) -> np.ndarray:
        return np.cumsum(self.explained_variance_ratio)

    def to_dict(self) -> dict:
        return {"kind": "pca", "mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained_variance_ratio": self.explained_variance_ratio.tolist(), "k": self.k}

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        comps = np.asarray(d["components"], float).reshape(d["k"], -1)
        return cls(np.asarray(d["mean"], float), comps,
                   np.asarray(d["explained_variance_ratio"], float), int(d["k"]))


def fit_pca(X, retention: float = PCA_RETENTION) -> PcaModel:
    """Eigen-decomposition of the covariance, keeping the fewest components
    whose cumulative explained-variance ratio reaches ``retention``."""
    X = np.asarray(fit_inputs(X)[0], dtype=float)
    n, d = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order].T
    # directions with no variance carry nothing
    tiny = max(evals[0], 0.0) * d * np.finfo(float).eps
    evals = np.where(evals > tiny, evals, 0.0)
    total = evals.sum()
    if total <= 0:
        raise FeatureError("training matrix has no variance")
    ratio = evals / total
    cum = np.cumsum(ratio)
    k = int(np.argmax(cum >= retention - _RETENTION_SLACK)) + 1
    k = min(k, int(np.count_nonzero(evals)))
    comps = evecs[:k].copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean, comps, ratio, k)


def apply_pca(model: PcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.mean.shape[0]:
        raise FeatureError(f"PCA was fitted on {model.mean.shape[0]} columns, got shape {X.shape}")
    return (X - model.mean) @ model.components.T


def reconstruct(model: PcaModel, scores) -> np.ndarray:
    return np.asarray(scores, float) @ model.components + model.mean


def pca_feature_names(model: PcaModel) -> tuple[str, ...]:
    return tuple(f"pc{i + 1}" for i in range(model.k))
