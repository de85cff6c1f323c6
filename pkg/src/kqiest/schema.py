"""Campaign, sample and session types plus CSV persistence and matrix export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

TECHNOLOGIES = ("LTE",)
BANDWIDTHS_MHZ = (5, 10, 15, 20)
POWER_SCENARIOS = ("MaxPT", "MinPT", "RedPT_Noise")

# (tx_power_db, noise_db) fixed by the campaign setup for each power scenario
SCENARIO_LEVELS = {
    "MaxPT": (0.0, -30.0),
    "MinPT": (-10.0, -30.0),
    "RedPT_Noise": (-20.0, -20.0),
}

# resolution level -> (width, height); level 0 means nothing displayed
RESOLUTIONS = {
    0: (0, 0),
    1: (720, 360),
    2: (1080, 540),
    3: (1440, 720),
    4: (2160, 1080),
    5: (3840, 1920),
}

MAX_FPS = 30.0
SESSION_SECONDS = 120

CONFIG_FIELDS = ("technology", "bandwidth_mhz", "power_scenario", "tx_power_db", "noise_db")
KPI_FIELDS = (
    "dl_throughput_mbps",
    "ul_throughput_mbps",
    "dl_retx_count",
    "ul_retx_count",
    "sinr_db",
    "rsrp_dbm",
    "carrier_freq_mhz",
    "channel_util",
    "cpe_wifi_rssi_dbm",
    "cpe_link_rate_mbps",
)
KQI_FIELDS = (
    "resolution_level",
    "frame_rate_fps",
    "initial_startup_ms",
    "avg_stall_ms",
    "client_throughput_mbps",
    "latency_ms",
)
CSV_HEADER = ("experiment_id", "t_s") + CONFIG_FIELDS + KPI_FIELDS + KQI_FIELDS

# numeric config columns offered as model inputs; power_scenario is fully
# described by (tx_power_db, noise_db)
CONFIG_FEATURES = ("technology", "bandwidth_mhz", "tx_power_db", "noise_db")
TECHNOLOGY_CODES = {name: i for i, name in enumerate(TECHNOLOGIES)}

_INT_COLUMNS = {"experiment_id", "t_s", "bandwidth_mhz", "dl_retx_count", "ul_retx_count", "resolution_level"}
_STR_COLUMNS = {"technology", "power_scenario"}


class SchemaError(ValueError):
    """Raised when a file or request does not match the dataset schema."""


class LeakageError(TypeError):
    """Raised when a split-tagged matrix is used where another split is required."""


@dataclass(frozen=True)
class ScenarioConfig:
    technology: str
    bandwidth_mhz: int
    power_scenario: str
    tx_power_db: float
    noise_db: float

    def __post_init__(self):
        if self.technology not in TECHNOLOGIES:
            raise ValueError(f"technology not in {{{','.join(TECHNOLOGIES)}}}")
        if self.bandwidth_mhz not in BANDWIDTHS_MHZ:
            raise ValueError("bandwidth not in {5,10,15,20}")
        if self.power_scenario not in POWER_SCENARIOS:
            raise ValueError(f"power_scenario not in {{{','.join(POWER_SCENARIOS)}}}")
        if (self.tx_power_db, self.noise_db) != SCENARIO_LEVELS[self.power_scenario]:
            tx, noise = SCENARIO_LEVELS[self.power_scenario]
            raise ValueError(
                f"{self.power_scenario} requires tx_power_db={tx:g}, noise_db={noise:g}"
            )

    @classmethod
    def from_scenario(cls, bandwidth_mhz: int, power_scenario: str, technology: str = "LTE"):
        tx, noise = SCENARIO_LEVELS[power_scenario]
        return cls(technology, bandwidth_mhz, power_scenario, tx, noise)

    @property
    def label(self) -> str:
        return f"{self.technology}/{self.bandwidth_mhz}MHz/{self.power_scenario}"


def default_scenarios() -> list[ScenarioConfig]:
    """The 12 campaign configurations, bandwidth-major."""
    return [
        ScenarioConfig.from_scenario(bw, ps) for bw in BANDWIDTHS_MHZ for ps in POWER_SCENARIOS
    ]


@dataclass(frozen=True)
class KpiVector:
    dl_throughput_mbps: float
    ul_throughput_mbps: float
    dl_retx_count: float
    ul_retx_count: float
    sinr_db: float
    rsrp_dbm: float
    carrier_freq_mhz: float
    channel_util: float
    cpe_wifi_rssi_dbm: float
    cpe_link_rate_mbps: float


@dataclass(frozen=True)
class KqiVector:
    resolution_level: int
    frame_rate_fps: float
    initial_startup_ms: float
    avg_stall_ms: float
    client_throughput_mbps: float
    latency_ms: float


@dataclass(frozen=True)
class Sample:
    experiment_id: int
    t_s: int
    config: ScenarioConfig
    kpis: KpiVector
    kqis: KqiVector


@dataclass(frozen=True)
class SessionRecord:
    experiment_id: int
    config: ScenarioConfig
    kpis: KpiVector
    kqis: KqiVector
    n_samples: int = SESSION_SECONDS


@dataclass(frozen=True)
class RowRejection:
    line: int
    experiment_id: int | None
    t_s: int | None
    reason: str

    def to_dict(self) -> dict:
        return {"line": self.line, "experiment_id": self.experiment_id, "t_s": self.t_s,
                "reason": self.reason}


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DatasetMatrix:
    """Named feature matrix with one target vector per KQI.

    ``experiment_ids`` and ``strata`` carry provenance so splits and
    session grouping survive every transformation.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    targets: Mapping[str, np.ndarray]
    split_tag: str = "unsplit"
    granularity: str = "per_session"
    experiment_ids: np.ndarray = field(default=None, repr=False)
    strata: tuple[str, ...] = field(default=(), repr=False)

    def __post_init__(self):
        X = _freeze(self.X)
        if X.ndim != 2:
            raise SchemaError("X must be two-dimensional")
        n, d = X.shape
        if len(self.feature_names) != d:
            raise SchemaError(f"{len(self.feature_names)} feature names for {d} columns")
        targets = {k: _freeze(v) for k, v in self.targets.items()}
        for name, v in targets.items():
            if v.shape != (n,):
                raise SchemaError(f"target {name!r} has length {v.shape[0]}, expected {n}")
        if self.split_tag not in ("train", "test", "unsplit"):
            raise SchemaError(f"unknown split tag {self.split_tag!r}")
        if self.granularity not in ("per_sample", "per_session"):
            raise SchemaError(f"unknown granularity {self.granularity!r}")
        ids = self.experiment_ids
        ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
        ids.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "experiment_ids", ids)
        object.__setattr__(self, "strata", tuple(self.strata) or ("",) * n)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def with_features(self, X: np.ndarray, feature_names: Sequence[str]) -> "DatasetMatrix":
        return replace(self, X=X, feature_names=tuple(feature_names))

    def tagged(self, split_tag: str) -> "DatasetMatrix":
        return replace(self, split_tag=split_tag)

    def take(self, rows: np.ndarray, split_tag: str | None = None) -> "DatasetMatrix":
        rows = np.asarray(rows)
        return DatasetMatrix(
            self.feature_names,
            self.X[rows],
            {k: v[rows] for k, v in self.targets.items()},
            split_tag or self.split_tag,
            self.granularity,
            self.experiment_ids[rows],
            tuple(self.strata[i] for i in rows),
        )


def require_split(ds: DatasetMatrix, *allowed: str) -> None:
    if ds.split_tag not in allowed:
        raise LeakageError(
            f"expected a {' or '.join(allowed)} matrix, got split_tag={ds.split_tag!r}"
        )


def fit_inputs(X, y=None):
    """Unwrap arrays for a fit call.

    A ``DatasetMatrix`` must be train-tagged; ``y`` may then name one of its
    targets. Plain arrays pass through untouched. Returns (X, y, names).
    """
    if isinstance(X, DatasetMatrix):
        require_split(X, "train")
        if isinstance(y, str):
            y = X.targets[y]
        return X.X, y, X.feature_names
    if isinstance(y, str):
        raise TypeError("a target name needs a DatasetMatrix")
    return X, y, None


# ---------------------------------------------------------------- CSV


def _format(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        raise TypeError("boolean values are not part of the schema")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def sample_row(s: Sample) -> list[str]:
    c, k, q = s.config, s.kpis, s.kqis
    values = [s.experiment_id, s.t_s]
    values += [getattr(c, f) for f in CONFIG_FIELDS]
    values += [getattr(k, f) for f in KPI_FIELDS]
    values += [getattr(q, f) for f in KQI_FIELDS]
    return [_format(v) for v in values]


def write_csv(samples: Iterable[Sample], path) -> Path:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for s in samples:
                writer.writerow(sample_row(s))
    except OSError as exc:
        raise OSError(f"cannot write dataset CSV {path}: {exc}") from exc
    return path


def _parse(column: str, text: str):
    if column in _STR_COLUMNS:
        return text
    if column in _INT_COLUMNS:
        try:
            return int(text)
        except ValueError:
            value = float(text)
            if not value.is_integer():
                raise ValueError(f"{column} must be an integer, got {text!r}") from None
            return int(value)
    return float(text)


def row_to_sample(row: Mapping[str, str]) -> Sample:
    """Parse one CSV row; raises ValueError with a readable reason."""
    values = {}
    for column in CSV_HEADER:
        text = row[column]
        try:
            values[column] = _parse(column, text)
        except ValueError:
            raise ValueError(f"unparsable {column}={text!r}") from None
    if not 0 <= values["t_s"] < SESSION_SECONDS:
        raise ValueError(f"t_s not in [0,{SESSION_SECONDS - 1}]")
    if values["resolution_level"] not in RESOLUTIONS:
        raise ValueError("resolution_level not in {0..5}")
    config = ScenarioConfig(**{f: values[f] for f in CONFIG_FIELDS})
    return Sample(
        values["experiment_id"],
        values["t_s"],
        config,
        KpiVector(**{f: values[f] for f in KPI_FIELDS}),
        KqiVector(**{f: values[f] for f in KQI_FIELDS}),
    )


def read_csv(path) -> tuple[list[Sample], list[RowRejection]]:
    """Read a dataset CSV.

    Returns the parsed samples and the rows that failed parsing or type
    invariants. A header that does not match the schema raises SchemaError.
    """
    path = Path(path)
    samples: list[Sample] = []
    rejected: list[RowRejection] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r}")
        unknown = [c for c in header if c not in CSV_HEADER]
        if unknown:
            raise SchemaError(f"{path}: unknown column {unknown[0]!r}")
        for line, cells in enumerate(reader, start=2):
            if len(cells) != len(header):
                rejected.append(RowRejection(line, None, None, f"expected {len(header)} cells, got {len(cells)}"))
                continue
            row = dict(zip(header, cells))
            try:
                samples.append(row_to_sample(row))
            except ValueError as exc:
                rejected.append(RowRejection(line, _maybe_int(row["experiment_id"]),
                                             _maybe_int(row["t_s"]), str(exc)))
    return samples, rejected


def _maybe_int(text: str) -> int | None:
    try:
        return int(text)
    except ValueError:
        return None


# ---------------------------------------------------------------- matrices


@dataclass(frozen=True)
class FeaturePolicy:
    """Which columns become model inputs.

    ``columns`` picks an explicit subset (schema order is kept); otherwise
    all KPI columns are used, plus the numeric config columns when
    ``include_config`` is set.
    """

    include_config: bool = True
    columns: tuple[str, ...] | None = None

    def feature_names(self) -> tuple[str, ...]:
        allowed = CONFIG_FEATURES + KPI_FIELDS
        if self.columns is None:
            return allowed if self.include_config else KPI_FIELDS
        for c in self.columns:
            if c in KQI_FIELDS:
                raise SchemaError(f"KQI {c!r} cannot be used as a feature")
            if c not in allowed:
                raise SchemaError(f"unknown feature column {c!r}")
        return tuple(c for c in allowed if c in self.columns)


def _config_value(config: ScenarioConfig, name: str) -> float:
    if name == "technology":
        return float(TECHNOLOGY_CODES[config.technology])
    return float(getattr(config, name))


def to_matrix(records: Sequence[Sample | SessionRecord],
              policy: FeaturePolicy = FeaturePolicy()) -> DatasetMatrix:
    if not records:
        raise SchemaError("cannot build a matrix from zero records")
    names = policy.feature_names()
    per_sample = isinstance(records[0], Sample)
    X = np.empty((len(records), len(names)))
    Y = np.empty((len(records), len(KQI_FIELDS)))
    for i, r in enumerate(records):
        for j, name in enumerate(names):
            if name in CONFIG_FEATURES:
                X[i, j] = _config_value(r.config, name)
            else:
                X[i, j] = getattr(r.kpis, name)
        for j, name in enumerate(KQI_FIELDS):
            Y[i, j] = getattr(r.kqis, name)
    return DatasetMatrix(
        names,
        X,
        {name: Y[:, j].copy() for j, name in enumerate(KQI_FIELDS)},
        "unsplit",
        "per_sample" if per_sample else "per_session",
        np.array([r.experiment_id for r in records], dtype=np.int64),
        tuple(r.config.label for r in records),
    )
