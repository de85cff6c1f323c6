import numpy as np
import pytest

from kqiest.preprocess import aggregate_sessions, split, SplitSpec
from kqiest.schema import (
    KpiVector,
    KqiVector,
    Sample,
    ScenarioConfig,
    to_matrix,
)
from kqiest.simulator import CampaignConfig, generate_campaign


def make_sample(experiment_id=0, t_s=0, config=None, **overrides):
    """A valid sample; keyword overrides replace KPI or KQI fields."""
    config = config or ScenarioConfig.from_scenario(20, "MaxPT")
    kpi = dict(dl_throughput_mbps=9.5, ul_throughput_mbps=0.3, dl_retx_count=2, ul_retx_count=1,
               sinr_db=21.7, rsrp_dbm=-75.2, carrier_freq_mhz=2655.0, channel_util=0.4,
               cpe_wifi_rssi_dbm=-44.0, cpe_link_rate_mbps=585.0)
    kqi = dict(resolution_level=5, frame_rate_fps=30.0, initial_startup_ms=120.0,
               avg_stall_ms=0.0, client_throughput_mbps=9.4, latency_ms=48.0)
    for k, v in overrides.items():
        if k in kpi:
            kpi[k] = v
        elif k in kqi:
            kqi[k] = v
        else:
            raise KeyError(k)
    return Sample(experiment_id, t_s, config, KpiVector(**kpi), KqiVector(**kqi))


@pytest.fixture(scope="session")
def small_campaign():
    """12 scenarios x 5 experiments x 120 s."""
    return generate_campaign(CampaignConfig(experiments_per_config=5), master_seed=7)


@pytest.fixture(scope="session")
def small_sessions(small_campaign):
    return aggregate_sessions(small_campaign)


@pytest.fixture(scope="session")
def session_split(small_sessions):
    """(train, test) DatasetMatrix pair without the constant columns."""
    train_r, test_r = split(small_sessions, SplitSpec(0.7, seed=3))
    train = to_matrix(train_r).tagged("train")
    test = to_matrix(test_r).tagged("test")
    keep = [j for j in range(train.d) if np.ptp(np.r_[train.X[:, j], test.X[:, j]]) > 0]
    names = [train.feature_names[j] for j in keep]
    return train.with_features(train.X[:, keep], names), test.with_features(test.X[:, keep], names)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------------------ acceptance report

_CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    _CRITERIA.setdefault(number, (title, []))[1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcomes = _CRITERIA[number]
        status = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}")
