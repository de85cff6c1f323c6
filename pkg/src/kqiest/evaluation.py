"""Test-set assessment: error metrics, timing, quality bands and KQI mutual information."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from . import regressors
from .features import PcaModel, SelectorModel, apply_pca, apply_selector
from .preprocess import ScalerParams, TargetScaler
from .regressors import TrainedModel, jsonable
from .schema import KQI_FIELDS, DatasetMatrix, require_split

BANDS = ("proper", "suitable", "acceptable", "inappropriate")
MI_BINS = 16


def _pair(y, y_hat):
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 1 or y.size == 0:
        raise ValueError(f"need equal non-empty 1-D vectors, got {y.shape} and {y_hat.shape}")
    return y, y_hat


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mae_pct(y, y_hat) -> float:
    """Sum of absolute errors over the sum of the truth, as a fraction.

    Raises ValueError when the truth does not sum to a positive number.
    """
    y, y_hat = _pair(y, y_hat)
    total = math.fsum(y)
    if not total > 0:
        raise ValueError("mae_pct is undefined when sum(y) <= 0")
    return math.fsum(np.abs(y - y_hat)) / total


def band(pct: float) -> str:
    if not pct >= 0:
        raise ValueError(f"band needs a non-negative fraction, got {pct!r}")
    if pct < 0.10:
        return "proper"
    if pct < 0.20:
        return "suitable"
    if pct <= 0.50:
        return "acceptable"
    return "inappropriate"


# ------------------------------------------------------------------ chain


@dataclass(frozen=True)
class ModelChain:
    """Fitted scaler, strategy transform and model, applied in that order."""

    scaler: ScalerParams
    transform: SelectorModel | PcaModel | None
    model: TrainedModel
    target_scaler: TargetScaler | None = None

    @property
    def strategy(self) -> str:
        if self.transform is None:
            return "No_FE"
        return "FS" if isinstance(self.transform, SelectorModel) else "FE"

    def features(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.scaler.mean) / self.scaler.std
        if isinstance(self.transform, SelectorModel):
            return apply_selector(self.transform, Z)
        if isinstance(self.transform, PcaModel):
            return apply_pca(self.transform, Z)
        return Z

    def predict(self, X) -> np.ndarray:
        out = regressors.predict(self.model, self.features(X))
        return self.target_scaler.inverse(out) if self.target_scaler else out


def ptime(chain: ModelChain, X, repeats: int = 10) -> float:
    """Mean microseconds per row of one full-batch predict, after a warm-up call."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("need at least one row to time")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    chain.predict(X)
    total = 0.0
    for _ in range(repeats):
        t0 = time.perf_counter()
        chain.predict(X)
        total += time.perf_counter() - t0
    return total / repeats / X.shape[0] * 1e6


@dataclass
class EvaluationReport:
    kqi: str
    strategy: str
    family: str
    hyperparameters: dict
    mae: float
    mae_pct: float | None
    band: str | None
    n_test: int
    ptime_us: float = field(default=math.nan, compare=False)
    notes: list[str] = field(default_factory=list)

    def to_dict(self, timing: bool = False) -> dict[str, Any]:
        d = asdict(self)
        d["hyperparameters"] = jsonable(self.hyperparameters)
        if not timing:
            d.pop("ptime_us")
        return d


def evaluate(chain: ModelChain, test: DatasetMatrix, kqi: str, repeats: int = 10,
             timed: bool = True) -> EvaluationReport:
    require_split(test, "test")
    if kqi not in test.targets:
        raise KeyError(f"unknown KQI {kqi!r}")
    y = test.targets[kqi]
    pred = chain.predict(test.X)
    notes = list(chain.model.notes)
    try:
        pct = mae_pct(y, pred)
        b = band(pct)
    except ValueError:
        pct, b = None, None
        notes.append("mae_pct undefined: test targets do not sum to a positive value")
    report = EvaluationReport(kqi, chain.strategy, chain.model.spec.family,
                              dict(chain.model.spec.hyperparameters), mae(y, pred), pct, b,
                              test.n, notes=notes)
    if timed:
        report.ptime_us = ptime(chain, test.X, repeats)
    return report


# ------------------------------------------------------------------ MI


def quantile_bins(x, bins: int = MI_BINS) -> np.ndarray:
    """Equal-frequency bin ids from ranks; tied values share their mean rank and so one bin.

    A point mass (say, most sessions with zero stall) keeps a bin of its own
    instead of swallowing the values next to it.
    """
    x = np.asarray(x, dtype=float)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    mean_rank = np.cumsum(counts) - (counts + 1) / 2.0  # 0-based mean rank of each value
    ids = np.floor(mean_rank * bins / len(x)).astype(np.int64)[inverse]
    # renumber to consecutive ids
    return np.unique(ids, return_inverse=True)[1]


def _entropy(counts) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log2(p))) + 0.0  # + 0.0 turns -0.0 into 0.0


def binned_mi(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information in bits between two bin-id vectors."""
    joint = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(joint, (a, b), 1.0)
    n = joint.sum()
    pa = joint.sum(axis=1) / n
    pb = joint.sum(axis=0) / n
    pj = joint / n
    nz = pj > 0
    mi = float(np.sum(pj[nz] * np.log2(pj[nz] / np.outer(pa, pb)[nz])))
    return max(mi, 0.0)


@dataclass(frozen=True)
class MiMatrix:
    names: tuple[str, ...]
    values: np.ndarray
    bins: int
    n_records: int

    def to_dict(self) -> dict:
        return {"names": list(self.names), "units": "bits",
                "binning": {"method": "quantile", "bins": self.bins},
                "n_records": self.n_records, "mi": self.values.tolist()}

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.names.index(a), self.names.index(b)])


def mi_matrix(targets, names: Sequence[str] = KQI_FIELDS, bins: int = MI_BINS) -> MiMatrix:
    """Pairwise MI between KQI columns. ``targets`` maps names to equal-length vectors."""
    if isinstance(targets, DatasetMatrix):
        targets = targets.targets
    cols = [np.asarray(targets[k], dtype=float) for k in names]
    n = len(cols[0])
    if n < 10 * bins:
        raise ValueError(f"need at least {10 * bins} records for {bins} bins, got {n}")
    ids = [quantile_bins(c, bins) for c in cols]
    k = len(names)
    M = np.zeros((k, k))
    for i in range(k):
        M[i, i] = _entropy(np.bincount(ids[i]).astype(float))
        for j in range(i + 1, k):
            M[i, j] = M[j, i] = binned_mi(ids[i], ids[j])
    return MiMatrix(tuple(names), M, bins, n)
