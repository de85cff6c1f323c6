"""Stage runners behind the command line: generate, prepare, train, evaluate.

Every stage reads and writes plain files under ``RunConfig.out`` so stages
can be rerun independently. JSON artifacts embed the seed and config hash;
derived CSVs carry them as trailing columns; the dataset CSV, whose header
is fixed, is bound to them through the sha256 recorded in manifest.json.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import regressors
from .evaluation import ModelChain, evaluate, mi_matrix, ptime
from .features import (PcaModel, SelectorModel, apply_pca, apply_selector, fit_pca,
                       fit_selector, pca_feature_names)
from .preprocess import (ScalerParams, SplitSpec, TargetScaler, aggregate_sessions, apply_scaler,
                         clean, drop_zero_variance, fit_scaler, split)
from .regressors import FAMILIES, GRIDS, grid_cells
from .schema import KQI_FIELDS, DatasetMatrix, SchemaError, read_csv, to_matrix, write_csv
from .selection import GridResult, make_folds, make_tasks, reduce_cells, refit_best, run_tasks
from .simulator import CampaignConfig, SimulatorConstants, generate_campaign

log = logging.getLogger("kqiest")

STRATEGY_ALIASES = {"none": "No_FE", "no_fe": "No_FE", "fs": "FS", "fe": "FE"}
STRATEGIES = ("No_FE", "FS", "FE")


class ConfigError(ValueError):
    pass


def _norm_strategy(s: str) -> str:
    key = s.strip().lower()
    if key not in STRATEGY_ALIASES:
        raise ConfigError(f"unknown strategy {s!r}; use none, fs or fe")
    return STRATEGY_ALIASES[key]


def _norm_family(f: str) -> str:
    up = f.strip().upper()
    if up not in FAMILIES:
        raise ConfigError(f"unknown family {f!r}; choose from {', '.join(FAMILIES)}")
    return up


def _ordered(values, universe):
    chosen = set(values)
    return tuple(v for v in universe if v in chosen)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    experiments: int = 60
    strategies: tuple[str, ...] = STRATEGIES
    families: tuple[str, ...] = FAMILIES
    kqis: tuple[str, ...] = KQI_FIELDS
    granularity: str = "per_session"
    out: str = "run"
    workers: int = 1
    train_fraction: float = 0.70
    standardize_targets: bool = False
    mi_bins: int = 16
    ptime_repeats: int = 10
    constants: dict = field(default_factory=dict)

    # keys that change where or how fast, never what
    _UNHASHED = ("out", "workers")

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("strategies", _ordered([_norm_strategy(s) for s in self.strategies], STRATEGIES))
        set_("families", _ordered([_norm_family(f) for f in self.families], FAMILIES))
        for k in self.kqis:
            if k not in KQI_FIELDS:
                raise ConfigError(f"unknown KQI {k!r}")
        set_("kqis", _ordered(self.kqis, KQI_FIELDS))
        for name in ("strategies", "families", "kqis"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if self.granularity not in ("per_session", "per_sample"):
            raise ConfigError("granularity must be per_session or per_sample")
        if not (isinstance(self.experiments, int) and self.experiments >= 2):
            raise ConfigError("experiments must be an integer >= 2")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers must be a positive integer")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie strictly between 0 and 1")
        try:
            SimulatorConstants.from_dict(self.constants)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad simulator constants: {exc}") from exc

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        d = dict(d)
        for k in ("strategies", "families", "kqis"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("strategies", "families", "kqis"):
            d[k] = list(d[k])
        return d

    @property
    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in self._UNHASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def sim_constants(self) -> SimulatorConstants:
        return SimulatorConstants.from_dict(self.constants)

    def stamp(self) -> dict:
        return {"seed": self.seed, "config_hash": self.config_hash}


# ------------------------------------------------------------------ io


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def read_json(path: Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_rows(path: Path, header, rows, cfg: RunConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*header, "seed", "config_hash"])
        for r in rows:
            w.writerow([*r, cfg.seed, cfg.config_hash])
    return path


def write_matrix(path: Path, ds: DatasetMatrix, cfg: RunConfig) -> Path:
    header = ["experiment_id", "stratum", *ds.feature_names, *KQI_FIELDS]
    rows = ([int(ds.experiment_ids[i]), ds.strata[i], *map(repr, ds.X[i].tolist()),
             *(repr(float(ds.targets[k][i])) for k in KQI_FIELDS)] for i in range(ds.n))
    return _write_rows(path, header, rows, cfg)


def read_matrix(path: Path, split_tag: str, granularity: str) -> DatasetMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    feats = header[2:-2 - len(KQI_FIELDS)]
    if header[-2 - len(KQI_FIELDS):-2] != list(KQI_FIELDS):
        raise SchemaError(f"{path}: unexpected target columns")
    d = len(feats)
    X = np.array([[float(v) for v in r[2:2 + d]] for r in body]).reshape(len(body), d)
    Y = np.array([[float(v) for v in r[2 + d:2 + d + len(KQI_FIELDS)]] for r in body])
    Y = Y.reshape(len(body), len(KQI_FIELDS))
    return DatasetMatrix(feats, X, {k: Y[:, j].copy() for j, k in enumerate(KQI_FIELDS)},
                         split_tag, granularity, np.array([int(r[0]) for r in body]),
                         tuple(r[1] for r in body))


class Timer:
    """Collects wall-clock figures, kept apart from reproducible artifacts."""

    def __init__(self):
        self.data: dict[str, Any] = {}

    def add(self, key: str, value):
        self.data[key] = value


# ------------------------------------------------------------------ stages


def cmd_generate(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    campaign = CampaignConfig(experiments_per_config=cfg.experiments, constants=cfg.sim_constants)
    samples = generate_campaign(campaign, cfg.seed, workers=cfg.workers)
    out.mkdir(parents=True, exist_ok=True)
    path = write_csv(samples, out / "dataset.csv")
    n_exp = len({s.experiment_id for s in samples})
    write_json(out / "manifest.json", {
        **cfg.stamp(),
        "config": cfg.to_dict(),
        "constants": cfg.sim_constants.to_dict(),
        "scenarios": [c.label for c in campaign.scenarios],
        "counts": {"samples": len(samples), "experiments": n_exp,
                   "configs": len(campaign.scenarios)},
        "dataset": {"path": "dataset.csv", "sha256": _sha256(path)},
    })
    log.info("generated %d samples in %s", len(samples), path)
    return path


def cmd_prepare(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    samples, rejections = read_csv(out / "dataset.csv")
    kept, report = clean(samples, rejections)
    sessions = aggregate_sessions(kept)
    records = sessions if cfg.granularity == "per_session" else kept

    full = to_matrix(records)
    full, dropped = drop_zero_variance(full)
    train_recs, test_recs = split(records, SplitSpec(cfg.train_fraction, cfg.seed))
    train_ids = {r.experiment_id for r in train_recs}
    in_train = np.array([e in train_ids for e in full.experiment_ids])
    train = full.take(np.flatnonzero(in_train), "train")
    test = full.take(np.flatnonzero(~in_train), "test")
    scaler = fit_scaler(train)

    prep = out / "prepared"
    write_matrix(prep / "train.csv", train, cfg)
    write_matrix(prep / "test.csv", test, cfg)
    write_matrix(prep / "train_scaled.csv", apply_scaler(scaler, train), cfg)
    write_matrix(prep / "test_scaled.csv", apply_scaler(scaler, test), cfg)
    # session KQIs over the whole cleaned campaign feed the MI analysis
    _write_rows(prep / "session_kqis.csv", ["experiment_id", *KQI_FIELDS],
                ([r.experiment_id, *(repr(float(getattr(r.kqis, k))) for k in KQI_FIELDS)]
                 for r in sessions), cfg)
    write_json(prep / "clean_report.json", {**cfg.stamp(), **report.to_dict()})
    write_json(prep / "dropped_columns.json", {**cfg.stamp(), "dropped": dropped,
                                               "kept": list(full.feature_names)})
    write_json(prep / "scaler.json", {**cfg.stamp(), **scaler.to_dict()})
    strata = sorted(set(train.strata))
    write_json(prep / "split.json", {
        **cfg.stamp(), "granularity": cfg.granularity, "train_fraction": cfg.train_fraction,
        "n_train": train.n, "n_test": test.n,
        "train_experiments": sorted(int(e) for e in set(train.experiment_ids.tolist())),
        "test_experiments": sorted(int(e) for e in set(test.experiment_ids.tolist())),
        "per_stratum": {s: [train.strata.count(s), test.strata.count(s)] for s in strata},
    })
    log.info("prepared %d train / %d test rows, dropped %s", train.n, test.n, dropped)
    return {"n_train": train.n, "n_test": test.n, "dropped": dropped}


def _load_prepared(cfg: RunConfig, tag: str) -> DatasetMatrix:
    return read_matrix(Path(cfg.out) / "prepared" / f"{tag}.csv", tag, cfg.granularity)


def _strategy_inputs(cfg: RunConfig, train_s: DatasetMatrix):
    """Strategy transforms fitted on the scaled train matrix, keyed by (kqi, strategy)."""
    transforms: dict = {}
    pca = fit_pca(train_s) if "FE" in cfg.strategies else None
    for qi, kqi in enumerate(cfg.kqis):
        for strategy in cfg.strategies:
            if strategy == "No_FE":
                transforms[kqi, strategy] = None
            elif strategy == "FE":
                transforms[kqi, strategy] = pca
            else:
                seed = int(np.random.SeedSequence([cfg.seed, 7, KQI_FIELDS.index(kqi)]).generate_state(1)[0])
                transforms[kqi, strategy] = fit_selector(train_s, kqi, seed=seed)
    return transforms


def _apply(transform, X):
    if isinstance(transform, SelectorModel):
        return apply_selector(transform, X)
    if isinstance(transform, PcaModel):
        return apply_pca(transform, X)
    return np.asarray(X, dtype=float)


def _transform_names(transform, names):
    if isinstance(transform, SelectorModel):
        return [transform.feature_names[i] for i in sorted(transform.selected)]
    if isinstance(transform, PcaModel):
        return list(pca_feature_names(transform))
    return list(names)


def _stem(kqi, strategy, family):
    return f"{kqi}__{strategy}__{family}"


def cmd_train(cfg: RunConfig, timer: Timer | None = None) -> dict[tuple, GridResult]:
    out = Path(cfg.out)
    t_start = time.perf_counter()
    scaler = ScalerParams.from_dict(read_json(out / "prepared" / "scaler.json"))
    train = _load_prepared(cfg, "train")
    train_s = apply_scaler(scaler, train)
    plan = make_folds(train_s.n, cfg.seed)
    transforms = _strategy_inputs(cfg, train_s)

    data, targets, all_tasks = {}, {}, {}
    for kqi in cfg.kqis:
        y = train_s.targets[kqi]
        tscaler = TargetScaler.fit(train_s, kqi) if cfg.standardize_targets else None
        y_fit = tscaler.transform(y) if tscaler else np.asarray(y, float)
        targets[kqi] = tscaler
        for strategy in cfg.strategies:
            key = (kqi, strategy)
            data[key] = (_apply(transforms[key], train_s.X), y_fit, plan)
            for family in cfg.families:
                all_tasks[kqi, strategy, family] = make_tasks(family, grid_cells(family), key, cfg.seed)

    flat = [t for ts in all_tasks.values() for t in ts]
    log.info("grid search: %d cells over %d workers", len(flat), cfg.workers)
    outcomes = iter(run_tasks(flat, data, cfg.workers))

    results: dict[tuple, GridResult] = {}
    fit_times = {}
    for (kqi, strategy, family), tasks in all_tasks.items():
        res = reduce_cells(family, tasks, [next(outcomes) for _ in tasks])
        X, y, _ = data[kqi, strategy]
        refit_best(res, tasks, X, y)
        results[kqi, strategy, family] = res
        stem = _stem(kqi, strategy, family)
        fit_times[stem] = [r.fit_seconds for r in res.records]
        cv_path = out / "cv_tables" / f"{stem}.csv"
        cv_path.parent.mkdir(parents=True, exist_ok=True)
        lines = res.cv_table_csv().splitlines()
        with open(cv_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(lines[0] + ",seed,config_hash\n")
            for line in lines[1:]:
                fh.write(f"{line},{cfg.seed},{cfg.config_hash}\n")
        transform = transforms[kqi, strategy]
        write_json(out / "models" / f"{stem}.json", {
            **cfg.stamp(),
            "kqi": kqi, "strategy": strategy,
            "best_cell": res.best_cell, "n_cells": len(res.records),
            "mean_cv_mae": res.best.mean_mae,
            "input_features": list(train_s.feature_names),
            "model_features": _transform_names(transform, train_s.feature_names),
            "scaler": scaler.to_dict(),
            "transform": transform.to_dict() if transform is not None else None,
            "target_scaler": asdict(targets[kqi]) if targets[kqi] else None,
            "model": regressors.model_to_dict(res.model),
        })
    if timer:
        timer.add("cv_mean_fit_seconds", fit_times)
        timer.add("train_seconds", time.perf_counter() - t_start)
    return results


def load_chain(path: Path) -> tuple[dict, ModelChain]:
    doc = read_json(path)
    tr = doc["transform"]
    if tr is None:
        transform = None
    elif tr["kind"] == "selector":
        transform = SelectorModel.from_dict(tr)
    else:
        transform = PcaModel.from_dict(tr)
    ts = doc["target_scaler"]
    chain = ModelChain(ScalerParams.from_dict(doc["scaler"]), transform,
                       regressors.model_from_dict(doc["model"]),
                       TargetScaler(**ts) if ts else None)
    return doc, chain


def _num(x):
    return None if x is None or not math.isfinite(x) else x


def cmd_evaluate(cfg: RunConfig, timer: Timer | None = None) -> list[dict]:
    out = Path(cfg.out)
    test = _load_prepared(cfg, "test")
    reports = []
    ptimes = {}
    for kqi in cfg.kqis:
        for strategy in cfg.strategies:
            for family in cfg.families:
                stem = _stem(kqi, strategy, family)
                doc, chain = load_chain(out / "models" / f"{stem}.json")
                rep = evaluate(chain, test, kqi, timed=False)
                d = rep.to_dict()
                d["mean_cv_mae"] = doc["mean_cv_mae"]
                reports.append(d)
                # timing runs alone, one model at a time
                ptimes[stem] = ptime(chain, test.X, cfg.ptime_repeats)

    # rank families within each (kqi, strategy) and mark the best row per KQI
    def key(r):
        return (math.inf if r["mae_pct"] is None else r["mae_pct"], FAMILIES.index(r["family"]),
                STRATEGIES.index(r["strategy"]))
    for kqi in cfg.kqis:
        rows = [r for r in reports if r["kqi"] == kqi]
        for strategy in cfg.strategies:
            group = sorted((r for r in rows if r["strategy"] == strategy), key=key)
            for rank, r in enumerate(group, 1):
                r["rank"] = rank
        best = min(rows, key=key)
        for r in rows:
            r["best_for_kqi"] = r is best

    reports_dir = out / "reports"
    best = {r["kqi"]: {k: r[k] for k in ("strategy", "family", "mae", "mae_pct", "band")}
            for r in reports if r["best_for_kqi"]}
    write_json(reports_dir / "reports.json", {**cfg.stamp(), "reports": reports, "best": best})
    header = ["kqi", "strategy", "rank", "family", "mae", "mae_pct", "band", "best_for_kqi",
              "hyperparameters", "n_test"]
    rows = [[r["kqi"], r["strategy"], r["rank"], r["family"], repr(r["mae"]),
             "" if r["mae_pct"] is None else repr(r["mae_pct"]), r["band"] or "undefined",
             int(r["best_for_kqi"]), json.dumps(r["hyperparameters"], sort_keys=True), r["n_test"]]
            for r in sorted(reports, key=lambda r: (KQI_FIELDS.index(r["kqi"]),
                                                    STRATEGIES.index(r["strategy"]), r["rank"]))]
    _write_rows(reports_dir / "summary.csv", header, rows, cfg)

    sess = read_matrix_kqis(out / "prepared" / "session_kqis.csv")
    n_sess = len(sess[KQI_FIELDS[0]])
    bins = min(cfg.mi_bins, n_sess // 10)
    if bins < cfg.mi_bins:
        log.warning("only %d sessions; MI uses %d bins instead of %d", n_sess, bins, cfg.mi_bins)
    mi = mi_matrix(sess, bins=bins)
    write_json(reports_dir / "mi.json", {**cfg.stamp(), **mi.to_dict()})
    if timer is not None:
        timer.add("ptime_us", ptimes)
    return reports


def read_matrix_kqis(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in KQI_FIELDS}


def cmd_all(cfg: RunConfig) -> dict:
    timer = Timer()
    t0 = time.perf_counter()
    cmd_generate(cfg)
    timer.add("generate_done_seconds", time.perf_counter() - t0)
    cmd_prepare(cfg)
    cmd_train(cfg, timer)
    reports = cmd_evaluate(cfg, timer)
    timer.add("total_seconds", time.perf_counter() - t0)
    timer.add("workers", cfg.workers)
    write_json(Path(cfg.out) / "reports" / "timing.json", {**cfg.stamp(), **timer.data})
    return {"reports": reports, "timing": timer.data}
