"""Cleaning, session aggregation, stratified splitting and standardization."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .schema import (
    KPI_FIELDS,
    KQI_FIELDS,
    MAX_FPS,
    RESOLUTIONS,
    SESSION_SECONDS,
    DatasetMatrix,
    KpiVector,
    KqiVector,
    RowRejection,
    Sample,
    SessionRecord,
    fit_inputs,
    require_split,
)

# peak LTE SISO spectral efficiency (bit/s/Hz); 20 MHz -> 75 Mbps
PEAK_SPECTRAL_EFFICIENCY = 3.75
THROUGHPUT_MARGIN = 1.2
MAX_BAD_FRACTION = 0.10


class PreprocessError(ValueError):
    pass


@dataclass
class CleanReport:
    n_input: int = 0
    n_output: int = 0
    sample_drops: list[dict] = field(default_factory=list)
    experiment_drops: list[dict] = field(default_factory=list)
    read_rejections: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_output": self.n_output,
            "n_sample_drops": len(self.sample_drops),
            "n_experiment_drops": len(self.experiment_drops),
            "sample_drops": self.sample_drops,
            "experiment_drops": self.experiment_drops,
            "read_rejections": self.read_rejections,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @property
    def total_drops(self) -> int:
        return self.n_input - self.n_output


def theoretical_capacity_mbps(bandwidth_mhz: float) -> float:
    return PEAK_SPECTRAL_EFFICIENCY * bandwidth_mhz


def sample_violations(s: Sample) -> list[str]:
    """Reasons a sample is unusable; empty when it is valid."""
    k, q = s.kpis, s.kqis
    reasons = []
    for name in KPI_FIELDS:
        if not math.isfinite(getattr(k, name)):
            reasons.append(f"{name} is not finite")
    for name in KQI_FIELDS:
        if not math.isfinite(getattr(q, name)):
            reasons.append(f"{name} is not finite")
    if reasons:
        return reasons
    if not 0 <= s.t_s < SESSION_SECONDS:
        reasons.append(f"t_s not in [0,{SESSION_SECONDS - 1}]")
    for name in ("dl_throughput_mbps", "ul_throughput_mbps"):
        if getattr(k, name) < 0:
            reasons.append(f"{name} < 0")
    for name in ("dl_retx_count", "ul_retx_count"):
        v = getattr(k, name)
        if v < 0 or float(v) != int(v):
            reasons.append(f"{name} not a non-negative integer")
    if not 0.0 <= k.channel_util <= 1.0:
        reasons.append("channel_util not in [0,1]")
    if q.resolution_level not in RESOLUTIONS:
        reasons.append("resolution_level not in {0..5}")
    if not 0.0 <= q.frame_rate_fps <= MAX_FPS:
        reasons.append(f"frame_rate_fps not in [0,{MAX_FPS:g}]")
    for name in ("initial_startup_ms", "avg_stall_ms", "client_throughput_mbps", "latency_ms"):
        if getattr(q, name) < 0:
            reasons.append(f"{name} < 0")
    cap = theoretical_capacity_mbps(s.config.bandwidth_mhz)
    if q.client_throughput_mbps > THROUGHPUT_MARGIN * cap:
        reasons.append(f"client_throughput_mbps above {THROUGHPUT_MARGIN:g}x channel capacity")
    return reasons


def clean(samples: Sequence[Sample],
          rejections: Sequence[RowRejection] = ()) -> tuple[list[Sample], CleanReport]:
    """Drop invalid samples, then whole experiments with more than 10% bad rows.

    ``rejections`` are rows that already failed at read time; they count
    against their experiment and are carried into the report.
    """
    report = CleanReport(n_input=len(samples))
    report.read_rejections = [r.to_dict() for r in rejections]
    totals: dict[int, int] = defaultdict(int)
    bad: dict[int, int] = defaultdict(int)
    for r in rejections:
        if r.experiment_id is not None:
            totals[r.experiment_id] += 1
            bad[r.experiment_id] += 1

    keep = []
    for s in samples:
        totals[s.experiment_id] += 1
        reasons = sample_violations(s)
        if reasons:
            bad[s.experiment_id] += 1
            report.sample_drops.append(
                {"experiment_id": s.experiment_id, "t_s": s.t_s, "reason": "; ".join(reasons)}
            )
        else:
            keep.append(s)

    doomed = {e for e, n in bad.items() if n > MAX_BAD_FRACTION * totals[e]}
    for e in sorted(doomed):
        report.experiment_drops.append(
            {"experiment_id": e, "bad_samples": bad[e], "total_samples": totals[e],
             "reason": f"more than {MAX_BAD_FRACTION:.0%} of samples invalid"}
        )
    out = [s for s in keep if s.experiment_id not in doomed]
    report.n_output = len(out)
    if not out:
        raise PreprocessError("cleaning dropped every sample")
    return out, report


def drop_zero_variance(ds: DatasetMatrix) -> tuple[DatasetMatrix, list[str]]:
    require_split(ds, "unsplit", "train")
    constant = np.ptp(ds.X, axis=0) == 0 if ds.n else np.ones(ds.d, bool)
    dropped = [name for name, c in zip(ds.feature_names, constant) if c]
    if len(dropped) == ds.d:
        raise PreprocessError("every feature has zero variance")
    keep = ~constant
    names = [n for n, k in zip(ds.feature_names, keep) if k]
    return ds.with_features(ds.X[:, keep], names), dropped


def lower_median(values) -> float:
    v = sorted(values)
    return v[(len(v) - 1) // 2]


def aggregate_sessions(samples: Sequence[Sample]) -> list[SessionRecord]:
    """One record per experiment: median resolution, mean of everything else."""
    groups: dict[int, list[Sample]] = defaultdict(list)
    for s in samples:
        groups[s.experiment_id].append(s)
    records = []
    for eid in sorted(groups):
        # fixed summation order keeps the means independent of input order
        ss = sorted(groups[eid], key=lambda s: s.t_s)
        configs = {s.config for s in ss}
        if len(configs) != 1:
            raise PreprocessError(f"experiment {eid} mixes scenario configurations")
        kpis = KpiVector(**{f: math.fsum(getattr(s.kpis, f) for s in ss) / len(ss)
                            for f in KPI_FIELDS})
        kq = {f: math.fsum(getattr(s.kqis, f) for s in ss) / len(ss) for f in KQI_FIELDS}
        kq["resolution_level"] = int(lower_median(s.kqis.resolution_level for s in ss))
        records.append(SessionRecord(eid, ss[0].config, kpis, KqiVector(**kq), len(ss)))
    return records


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    seed: int = 0
    stratify: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise PreprocessError("train_fraction must lie strictly between 0 and 1")


def split(records: Sequence, spec: SplitSpec) -> tuple[list, list]:
    """Seeded stratified split on whole experiments.

    Works for session records and for per-second samples; samples of one
    experiment always land on the same side.
    """
    units: dict[int, list] = defaultdict(list)
    labels: dict[int, str] = {}
    for r in records:
        units[r.experiment_id].append(r)
        labels[r.experiment_id] = r.config.label if spec.stratify else ""
    strata: dict[str, list[int]] = defaultdict(list)
    for eid in sorted(units):
        strata[labels[eid]].append(eid)

    train_ids, test_ids = set(), set()
    for si, label in enumerate(sorted(strata)):
        ids = strata[label]
        if len(ids) < 2:
            raise PreprocessError(f"stratum {label!r} has {len(ids)} experiment(s); need >= 2")
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, si]))
        order = rng.permutation(len(ids))
        n_train = int(math.floor(spec.train_fraction * len(ids) + 0.5))
        n_train = min(max(n_train, 1), len(ids) - 1)
        train_ids.update(ids[i] for i in order[:n_train])
        test_ids.update(ids[i] for i in order[n_train:])
    train = [r for r in records if r.experiment_id in train_ids]
    test = [r for r in records if r.experiment_id in test_ids]
    return train, test


@dataclass(frozen=True)
class ScalerParams:
    feature_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "mean": self.mean.tolist(),
                "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(tuple(d["feature_names"]), np.asarray(d["mean"], float), np.asarray(d["std"], float))


def fit_scaler(train: DatasetMatrix) -> ScalerParams:
    require_split(train, "train")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    zero = [n for n, s in zip(train.feature_names, std) if s == 0]
    if zero:
        raise PreprocessError(f"column {zero[0]!r} has zero standard deviation")
    return ScalerParams(train.feature_names, mean, std)


def _check_columns(params: ScalerParams, ds: DatasetMatrix) -> None:
    if tuple(ds.feature_names) != params.feature_names:
        raise PreprocessError("feature columns do not match the fitted scaler")


def apply_scaler(params: ScalerParams, ds: DatasetMatrix) -> DatasetMatrix:
    _check_columns(params, ds)
    return ds.with_features((ds.X - params.mean) / params.std, ds.feature_names)


def unscale(params: ScalerParams, ds: DatasetMatrix) -> DatasetMatrix:
    _check_columns(params, ds)
    return ds.with_features(ds.X * params.std + params.mean, ds.feature_names)


@dataclass(frozen=True)
class TargetScaler:
    """Optional standardization of one target; predictions are mapped back."""

    mean: float
    std: float

    @classmethod
    def fit(cls, y, kqi: str | None = None) -> "TargetScaler":
        if isinstance(y, DatasetMatrix):
            y = fit_inputs(y, kqi)[1]
        y = np.asarray(y, float)
        std = float(y.std())
        return cls(float(y.mean()), std if std > 0 else 1.0)

    def transform(self, y):
        return (np.asarray(y, float) - self.mean) / self.std

    def inverse(self, z):
        return np.asarray(z, float) * self.std + self.mean
