"""Six regression families behind one fit/predict contract.

>>> spec = EstimatorSpec("RR", {"alpha": 1.0, "fit_intercept": True})
>>> model = fit(spec, X, y)          # doctest: +SKIP
>>> predict(model, X_new)            # doctest: +SKIP
"""

from __future__ import annotations

import itertools
import numbers
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..schema import fit_inputs
from .linear import RidgeRegressor
from .mlp import MLPRegressor
from .neighbors import KDTree, KNeighborsRegressor
from .svr import KERNELS, SVRRegressor
from .trees import AdaBoostR2Regressor, RandomForestRegressor, RegressionTree

FAMILIES = ("RF", "RR", "SVR", "KNR", "NN", "ABR")

# value lists in their published order; enumeration is row-major over them
GRIDS: dict[str, dict[str, list]] = {
    "RF": {
        "n_estimators": [1, 2, 3, 4, 5, 6],
        "max_depth": [5, 6, 7, 8, 9, 10],
    },
    "RR": {
        "alpha": [10.0 ** e for e in range(-5, 6)],
        "fit_intercept": [False, True],
    },
    "SVR": {
        "kernel": ["poly", "rbf", "sigmoid"],
        "degree": [1, 2, 3, 4, 5, 6, 7],
        "epsilon": [0.01, 0.1, 0.5, 1.0],
        "C": [0.1, 1, 10, 100],
    },
    "KNR": {
        "leaf_size": [10, 20, 30],
        "n_neighbors": [2, 4, 6],
        "p": [1, 2, 3],
    },
    "NN": {
        "alpha": [0.0001, 0.0003, 0.001, 0.003, 0.01],
        "hidden_layer_sizes": [(80,), (100,), (80, 80), (100, 100), (80, 80, 80),
                               (100, 100, 100), (200, 200, 200)],
    },
    "ABR": {
        "n_estimators": [50, 75, 100, 125, 150],
        "learning_rate": [0.0, 0.333, 0.666, 1.0],
    },
}

# a learning rate of 0 would freeze AdaBoost's weights and zero every round weight
ABR_ZERO_LEARNING_RATE = 1e-3

MODEL_FORMAT = "kqiest.model"
MODEL_VERSION = 1


class SpecError(ValueError):
    pass


def _int(v, lo=1):
    return isinstance(v, numbers.Integral) and not isinstance(v, bool) and v >= lo


def _num(v, lo=0.0, strict=False):
    if not isinstance(v, numbers.Real) or isinstance(v, bool) or not np.isfinite(v):
        return False
    return v > lo if strict else v >= lo


_DOMAINS = {
    "n_estimators": (_int, "a positive integer"),
    "max_depth": (lambda v: v is None or _int(v), "a positive integer or None"),
    "alpha": (_num, "a non-negative number"),
    "fit_intercept": (lambda v: isinstance(v, (bool, np.bool_)), "a boolean"),
    "kernel": (lambda v: v in KERNELS, f"one of {sorted(KERNELS)}"),
    "degree": (_int, "a positive integer"),
    "epsilon": (_num, "a non-negative number"),
    "C": (lambda v: _num(v, strict=True), "a positive number"),
    "leaf_size": (_int, "a positive integer"),
    "n_neighbors": (_int, "a positive integer"),
    "p": (lambda v: _num(v, 1.0), "a number >= 1"),
    "hidden_layer_sizes": (
        lambda v: isinstance(v, (tuple, list)) and len(v) > 0 and all(_int(x) for x in v),
        "a non-empty sequence of positive integers",
    ),
    "learning_rate": (_num, "a non-negative number"),
}


def grid_cells(family: str, grid: dict[str, list] | None = None) -> list[dict[str, Any]]:
    grid = GRIDS[family] if grid is None else grid
    names = list(grid)
    return [dict(zip(names, values)) for values in itertools.product(*grid.values())]


@dataclass(frozen=True)
class EstimatorSpec:
    family: str
    hyperparameters: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        expected = set(GRIDS[self.family])
        given = set(self.hyperparameters)
        if given != expected:
            missing = sorted(expected - given)
            extra = sorted(given - expected)
            raise SpecError(f"{self.family} hyperparameters: missing {missing}, unexpected {extra}")
        for name, value in self.hyperparameters.items():
            check, text = _DOMAINS[name]
            if not check(value):
                raise SpecError(f"{self.family}.{name} must be {text}, got {value!r}")
        hp = dict(self.hyperparameters)
        if "hidden_layer_sizes" in hp:
            hp["hidden_layer_sizes"] = tuple(int(x) for x in hp["hidden_layer_sizes"])
        object.__setattr__(self, "hyperparameters", hp)

    def effective(self) -> tuple[dict, list[str]]:
        """Hyperparameters actually used, plus notes on any substitution."""
        hp = dict(self.hyperparameters)
        notes = []
        if self.family == "ABR" and hp["learning_rate"] == 0.0:
            hp["learning_rate"] = ABR_ZERO_LEARNING_RATE
            notes.append(f"learning_rate 0.0 replaced by {ABR_ZERO_LEARNING_RATE:g}")
        return hp, notes

    def to_dict(self) -> dict:
        return {"family": self.family, "hyperparameters": jsonable(self.hyperparameters),
                "seed": self.seed}


def jsonable(hp: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in hp.items()}


def make_estimator(spec: EstimatorSpec):
    hp, _ = spec.effective()
    f = spec.family
    if f == "RF":
        return RandomForestRegressor(hp["n_estimators"], hp["max_depth"], seed=spec.seed)
    if f == "RR":
        return RidgeRegressor(hp["alpha"], bool(hp["fit_intercept"]))
    if f == "SVR":
        return SVRRegressor(hp["kernel"], hp["degree"], hp["epsilon"], hp["C"])
    if f == "KNR":
        return KNeighborsRegressor(hp["n_neighbors"], hp["p"], hp["leaf_size"])
    if f == "NN":
        return MLPRegressor(hp["hidden_layer_sizes"], hp["alpha"], seed=spec.seed)
    return AdaBoostR2Regressor(hp["n_estimators"], hp["learning_rate"], seed=spec.seed)


@dataclass(frozen=True)
class TrainedModel:
    spec: EstimatorSpec
    n_features: int
    estimator: Any
    notes: tuple[str, ...] = ()

    @property
    def converged(self) -> bool:
        return getattr(self.estimator, "converged_", True)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


def fit(spec: EstimatorSpec, X, y=None) -> TrainedModel:
    """Fit one cell. ``X`` may be a train-tagged DatasetMatrix with ``y`` a KQI name."""
    X, y, _ = fit_inputs(X, y)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes X{X.shape}, y{y.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("inputs contain NaN or Inf")
    est = make_estimator(spec).fit(X, y)
    return TrainedModel(spec, X.shape[1], est, tuple(spec.effective()[1]))


def predict(model: TrainedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} columns, got shape {X.shape}")
    return model.estimator.predict(X)


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        **model.spec.to_dict(),
        "n_features": model.n_features,
        "notes": list(model.notes),
        "state": model.estimator.get_state(),
    }


def model_from_dict(data: dict) -> TrainedModel:
    if data.get("format") != MODEL_FORMAT or data.get("version") != MODEL_VERSION:
        raise ValueError("not a serialized model of a supported version")
    hp = dict(data["hyperparameters"])
    spec = EstimatorSpec(data["family"], hp, data["seed"])
    est = make_estimator(spec)
    est.set_state(data["state"])
    return TrainedModel(spec, int(data["n_features"]), est, tuple(data.get("notes", ())))


__all__ = [
    "FAMILIES", "GRIDS", "EstimatorSpec", "TrainedModel", "SpecError", "fit", "predict",
    "grid_cells", "model_to_dict", "model_from_dict", "RandomForestRegressor", "RidgeRegressor",
    "SVRRegressor", "KNeighborsRegressor", "KDTree", "MLPRegressor", "AdaBoostR2Regressor",
    "RegressionTree",
]
