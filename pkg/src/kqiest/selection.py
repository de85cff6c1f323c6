"""Exhaustive grid search scored by 5-fold cross-validated MAE.

Cells are independent work units. Each one gets a seed derived from
``(master_seed, cell_index)`` and results are reduced in enumeration order,
so the outcome does not depend on how many workers ran it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np

from . import regressors
from .regressors import EstimatorSpec, TrainedModel, grid_cells, jsonable
from .schema import fit_inputs

N_FOLDS = 5


@dataclass(frozen=True)
class CvPlan:
    folds: np.ndarray
    seed: int
    n_folds: int = N_FOLDS

    @property
    def n(self) -> int:
        return len(self.folds)

    def train_test(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        held = self.folds == k
        return np.flatnonzero(~held), np.flatnonzero(held)


def make_folds(n: int, seed: int = 0, n_folds: int = N_FOLDS) -> CvPlan:
    if n < n_folds:
        raise ValueError(f"need at least {n_folds} rows for {n_folds}-fold CV, got {n}")
    perm = np.random.default_rng(np.random.SeedSequence([seed, n])).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % n_folds
    folds.flags.writeable = False
    return CvPlan(folds, seed, n_folds)


def cell_seed(master_seed: int, cell_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, cell_index]).generate_state(1)[0])


@dataclass(frozen=True)
class CellTask:
    data_key: Hashable
    family: str
    cell_index: int
    hyperparameters: dict
    seed: int

    def dedupe_key(self):
        """Tasks with equal keys give identical results."""
        hp = dict(self.hyperparameters)
        seeded = self.family in ("RF", "NN", "ABR")
        if self.family == "SVR" and hp["kernel"] != "poly":
            hp.pop("degree")  # only the polynomial kernel reads it
        return (self.data_key, self.family, json.dumps(jsonable(hp), sort_keys=True),
                self.seed if seeded else None)


@dataclass(frozen=True)
class CellRecord:
    index: int
    hyperparameters: dict
    fold_mae: tuple[float, ...]
    mean_mae: float
    fit_seconds: float
    error: str = ""


@dataclass
class GridResult:
    family: str
    records: list[CellRecord]
    best_cell: int
    model: TrainedModel | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def best(self) -> CellRecord:
        return self.records[self.best_cell]

    def cv_table_csv(self) -> str:
        """One row per cell per fold. Timing is left out so the table is reproducible."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "cell", "hyperparameters", "fold", "mae", "mean_cv_mae", "status"])
        for r in self.records:
            hp = json.dumps(jsonable(r.hyperparameters), sort_keys=True)
            status = r.error or "ok"
            folds = r.fold_mae or (math.inf,) * N_FOLDS
            for k, m in enumerate(folds):
                w.writerow([self.family, r.index, hp, k, repr(float(m)), repr(float(r.mean_mae)), status])
        return buf.getvalue()


# ------------------------------------------------------------- workers

_DATA: dict = {}


def _init(data):
    global _DATA
    _DATA = data


def _fold_mae(family, hp, seed, X, y, plan) -> tuple[tuple[float, ...], float, str]:
    spec = EstimatorSpec(family, hp, seed)
    maes = []
    t0 = time.perf_counter()
    for k in range(plan.n_folds):
        tr, te = plan.train_test(k)
        try:
            model = regressors.fit(spec, X[tr], y[tr])
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            return (), time.perf_counter() - t0, f"fit error: {exc}"
        if not model.converged:
            return (), time.perf_counter() - t0, "did not converge"
        pred = regressors.predict(model, X[te])
        if not np.all(np.isfinite(pred)):
            return (), time.perf_counter() - t0, "non-finite prediction"
        maes.append(float(np.mean(np.abs(y[te] - pred))))
    return tuple(maes), (time.perf_counter() - t0) / plan.n_folds, ""


def _run(task: CellTask):
    X, y, plan = _DATA[task.data_key]
    return _fold_mae(task.family, task.hyperparameters, task.seed, X, y, plan)


def run_tasks(tasks: Sequence[CellTask], data: dict, workers: int = 1) -> list:
    """Evaluate tasks, returning outcomes in task order.

    ``data`` maps each ``data_key`` to ``(X, y, plan)``. Duplicate tasks
    (see ``CellTask.dedupe_key``) are computed once.
    """
    unique: dict = {}
    for t in tasks:
        unique.setdefault(t.dedupe_key(), t)
    todo = list(unique.values())
    if workers <= 1 or len(todo) <= 1:
        _init(data)
        try:
            outcomes = [_run(t) for t in todo]
        finally:
            _init({})
    else:
        with ProcessPoolExecutor(workers, initializer=_init, initargs=(data,)) as ex:
            outcomes = list(ex.map(_run, todo, chunksize=1))
    by_key = dict(zip(unique, outcomes))
    return [by_key[t.dedupe_key()] for t in tasks]


# ------------------------------------------------------------- search


def make_tasks(family, cells, data_key, master_seed) -> list[CellTask]:
    return [CellTask(data_key, family, i, hp, cell_seed(master_seed, i)) for i, hp in enumerate(cells)]


def reduce_cells(family: str, tasks: Sequence[CellTask], outcomes) -> GridResult:
    records = []
    for t, (maes, secs, err) in zip(tasks, outcomes):
        mean = float(np.mean(maes)) if maes else math.inf
        records.append(CellRecord(t.cell_index, t.hyperparameters, maes, mean, secs, err))
    scores = np.array([r.mean_mae for r in records])
    if not np.any(np.isfinite(scores)):
        raise RuntimeError(f"every {family} cell failed; first error: {records[0].error}")
    best = int(np.argmin(scores))  # first minimum, so ties go to the earliest cell
    return GridResult(family, records, best)


def refit_best(result: GridResult, tasks: Sequence[CellTask], X, y) -> GridResult:
    t = tasks[result.best_cell]
    spec = EstimatorSpec(result.family, t.hyperparameters, t.seed)
    result.model = regressors.fit(spec, X, y)
    result.notes = list(result.model.notes)
    return result


def grid_search(family: str, grid: dict[str, list] | None, X, y=None, plan: CvPlan | None = None,
                master_seed: int = 0, workers: int = 1) -> GridResult:
    """Score every cell of ``grid`` by mean CV MAE and refit the best one.

    ``X`` may be a train-tagged DatasetMatrix with ``y`` naming a KQI.
    """
    X, y, _ = fit_inputs(X, y)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes X{X.shape}, y{y.shape}")
    cells = grid_cells(family, grid)
    if not cells:
        raise ValueError("empty grid")
    plan = plan or make_folds(len(y), master_seed)
    if plan.n != len(y):
        raise ValueError("CV plan does not match the number of rows")
    tasks = make_tasks(family, cells, 0, master_seed)
    outcomes = run_tasks(tasks, {0: (X, y, plan)}, workers)
    return refit_best(reduce_cells(family, tasks, outcomes), tasks, X, y)


def cells_summary(result: GridResult) -> list[dict[str, Any]]:
    return [{"cell": r.index, "hyperparameters": jsonable(r.hyperparameters),
             "mean_cv_mae": r.mean_mae if math.isfinite(r.mean_mae) else None,
             "status": r.error or "ok"} for r in result.records]
