"""Seeded 360-video session simulator.

Each session is 120 one-second steps of a fading radio channel feeding a
throughput-based DASH client. The channel, KPI and latency models are
statistical stand-ins; every constant lives in :class:`SimulatorConstants`.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .schema import (
    MAX_FPS,
    SESSION_SECONDS,
    KpiVector,
    KqiVector,
    Sample,
    ScenarioConfig,
    default_scenarios,
)


@dataclass(frozen=True)
class MediaLadder:
    levels: tuple[tuple[int, float], ...] = ((1, 1.0), (2, 1.5), (3, 3.0), (4, 5.0), (5, 9.0))
    segment_s: float = 4.0
    fps: float = MAX_FPS
    initial_buffer_ms: float = 5000.0
    max_buffer_ms: float = 50000.0

    def __post_init__(self):
        rates = [b for _, b in self.levels]
        if any(b2 <= b1 for b1, b2 in zip(rates, rates[1:])):
            raise ValueError("ladder bitrates must be strictly increasing")

    def bitrate(self, level: int) -> float:
        return self.levels[level - 1][1]


@dataclass(frozen=True)
class SimulatorConstants:
    snr_base_db: dict = field(
        default_factory=lambda: {"MaxPT": 22.0, "MinPT": 12.0, "RedPT_Noise": 4.0}
    )
    fading_rho: float = 0.9
    fading_sigma_db: float = 1.5
    spectral_efficiency: float = 0.35
    capacity_scale: float = 1.0  # 0 starves the link
    outage_max_rate: float = 0.08
    outage_mid_db: float = 0.0
    outage_width_db: float = 2.0
    outage_mean_s: float = 10.0
    abr_safety: float = 0.8
    ewma_half_life: float = 3.0
    loss_max: float = 0.3
    loss_mid_db: float = 2.0
    loss_width_db: float = 2.0
    dl_retx_intercept: float = 30.0
    dl_retx_slope: float = 1.2
    ul_retx_intercept: float = 10.0
    ul_retx_slope: float = 0.4
    base_rtt_ms: float = 35.0
    queue_delay_ms: float = 80.0
    max_utilization: float = 0.95
    latency_jitter: float = 0.05
    client_tp_jitter: float = 0.02
    ul_ratio: float = 0.02
    ul_floor_mbps: float = 0.05
    sinr_noise_db: float = 0.5
    rsrp_ref_dbm: float = -75.0
    rsrp_noise_db: float = 1.0
    carrier_freq_mhz: float = 2655.0
    wifi_rssi_dbm: float = -45.0
    wifi_rates_mbps: tuple[float, ...] = (433.3, 520.0, 585.0, 650.0, 780.0, 866.7)
    media: MediaLadder = field(default_factory=MediaLadder)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimulatorConstants":
        data = dict(data)
        if "media" in data and isinstance(data["media"], dict):
            media = dict(data["media"])
            if "levels" in media:
                media["levels"] = tuple(tuple(x) for x in media["levels"])
            data["media"] = MediaLadder(**media)
        if "wifi_rates_mbps" in data:
            data["wifi_rates_mbps"] = tuple(data["wifi_rates_mbps"])
        return replace(cls(), **data)


DEFAULT_CONSTANTS = SimulatorConstants()


def channel_capacity_mbps(bandwidth_mhz, snr_db, constants=DEFAULT_CONSTANTS):
    """Shannon-style capacity scaled by the spectral-efficiency factor."""
    snr = np.asarray(snr_db, dtype=float)
    cap = constants.spectral_efficiency * bandwidth_mhz * np.log2(1.0 + 10.0 ** (snr / 10.0))
    return constants.capacity_scale * cap


def packet_loss(snr_db, constants=DEFAULT_CONSTANTS):
    return constants.loss_max / (1.0 + np.exp((np.asarray(snr_db) - constants.loss_mid_db)
                                              / constants.loss_width_db))


def outage_probability(snr_db, constants=DEFAULT_CONSTANTS):
    """Per-second probability that a radio-link outage starts."""
    return constants.outage_max_rate / (
        1.0 + np.exp((np.asarray(snr_db) - constants.outage_mid_db) / constants.outage_width_db))


def outage_mask(snr_db, u, lengths, constants=DEFAULT_CONSTANTS) -> np.ndarray:
    """1 where the link is up, 0 during outages (capacity drops to zero)."""
    p = outage_probability(snr_db, constants)
    mask = np.ones(len(p))
    t = 0
    while t < len(p):
        if u[t] < p[t]:
            mask[t:t + lengths[t]] = 0.0
            t += lengths[t]
        else:
            t += 1
    return mask


@dataclass
class ClientState:
    buffer_s: float = 0.0
    phase: str = "startup"
    level: int = 1
    ewma_mbps: float | None = None
    startup_s: float = 0.0
    stall_s: float = 0.0
    segment_progress_s: float = 0.0
    decide: bool = True


@dataclass(frozen=True)
class StepTrace:
    """Per-second internals, exposed for invariant checks."""

    capacity_mbps: float
    delivered_mbps: float
    demand_mbps: float
    buffer_s: float
    phase: str
    level: int
    ewma_at_decision: float | None
    decided: bool


def choose_level(ewma_mbps: float | None, media: MediaLadder, safety: float) -> int:
    if ewma_mbps is None:
        return 1
    best = 1
    for level, rate in media.levels:
        if rate <= safety * ewma_mbps:
            best = level
    return best


def _advance(state: ClientState, content_rate: float, media: MediaLadder) -> tuple[float, float]:
    """Run the client for one wall-second; returns (playing_s, stalled_s)."""
    target = media.initial_buffer_ms / 1000.0
    cap = media.max_buffer_ms / 1000.0
    remaining = 1.0
    played = stalled = 0.0
    for _ in range(6):
        if remaining <= 1e-12:
            break
        if state.phase in ("startup", "stalled"):
            need = target - state.buffer_s
            if content_rate * remaining < need:
                state.buffer_s += content_rate * remaining
                dt = remaining
            else:
                dt = need / content_rate if need > 0 else 0.0
                state.buffer_s = max(state.buffer_s, target)
            if state.phase == "startup":
                state.startup_s += dt
            else:
                state.stall_s += dt
                stalled += dt
            remaining -= dt
            if remaining > 1e-12:
                state.phase = "playing"
        else:
            net = content_rate - 1.0
            if net >= 0.0 or state.buffer_s + net * remaining > 0.0:
                state.buffer_s += net * remaining
                played += remaining
                remaining = 0.0
            else:
                dt = state.buffer_s / -net
                state.buffer_s = 0.0
                played += dt
                remaining -= dt
                state.phase = "stalled"
    state.buffer_s = min(max(state.buffer_s, 0.0), cap)
    return played, stalled


def simulate_session(config: ScenarioConfig, seed, constants: SimulatorConstants = DEFAULT_CONSTANTS,
                     experiment_id: int = 0, trace: list | None = None) -> list[Sample]:
    """Simulate one 120 s playback.

    ``seed`` is anything :class:`numpy.random.SeedSequence` accepts; the
    output depends only on ``(config, seed, constants)``. When ``trace`` is a
    list, per-second :class:`StepTrace` entries are appended to it.
    """
    c = constants
    media = c.media
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    T = SESSION_SECONDS

    # all randomness is drawn up front in a fixed order
    eps = rng.standard_normal(T)
    fading = np.empty(T)
    f = eps[0] * c.fading_sigma_db / math.sqrt(1.0 - c.fading_rho ** 2)
    fading[0] = f
    for t in range(1, T):
        f = c.fading_rho * f + c.fading_sigma_db * eps[t]
        fading[t] = f
    snr = c.snr_base_db[config.power_scenario] + fading
    capacity = channel_capacity_mbps(config.bandwidth_mhz, snr, c)
    loss = packet_loss(snr, c)
    dl_lambda = np.maximum(0.0, c.dl_retx_intercept - c.dl_retx_slope * snr)
    ul_lambda = np.maximum(0.0, c.ul_retx_intercept - c.ul_retx_slope * snr)
    dl_retx = rng.poisson(dl_lambda)
    ul_retx = rng.poisson(ul_lambda)
    sinr = snr + c.sinr_noise_db * rng.standard_normal(T)
    rsrp = c.rsrp_ref_dbm + config.tx_power_db + c.rsrp_noise_db * rng.standard_normal(T)
    rssi = c.wifi_rssi_dbm + 3.0 * rng.standard_normal() + 2.0 * rng.standard_normal(T)
    link_rate = rng.choice(np.asarray(c.wifi_rates_mbps), size=T)
    lat_noise = np.exp(c.latency_jitter * rng.standard_normal(T))
    tp_noise = np.exp(c.client_tp_jitter * rng.standard_normal(T))
    ul_noise = np.exp(0.1 * rng.standard_normal(T))
    outage_u = rng.random(T)
    outage_len = 1 + rng.geometric(1.0 / c.outage_mean_s, size=T)
    capacity = capacity * outage_mask(snr, outage_u, outage_len, c)

    alpha = 1.0 - 0.5 ** (1.0 / c.ewma_half_life)
    state = ClientState()
    rows = []
    cap_s = media.max_buffer_ms / 1000.0
    for t in range(T):
        decided = state.decide
        ewma_used = state.ewma_mbps
        if state.decide:
            state.level = choose_level(state.ewma_mbps, media, c.abr_safety)
            state.decide = False
        bitrate = media.bitrate(state.level)
        room = cap_s - state.buffer_s + (1.0 if state.phase == "playing" else 0.0)
        demand = max(room, 0.0) * bitrate
        cap_t = float(capacity[t])
        delivered = min(cap_t, demand) * (1.0 - float(loss[t]))
        rate = delivered / bitrate
        played, stalled = _advance(state, rate, media)

        state.segment_progress_s += rate
        if state.segment_progress_s >= media.segment_s:
            state.segment_progress_s %= media.segment_s
            state.decide = True
        if delivered > 0.0:
            achievable = cap_t * (1.0 - float(loss[t]))
            state.ewma_mbps = achievable if state.ewma_mbps is None else (
                state.ewma_mbps + alpha * (achievable - state.ewma_mbps))

        if cap_t > 0.0:
            util = min(demand / cap_t, 1.0)
        else:
            util = 1.0 if demand > 0.0 else 0.0
        u = min(util, c.max_utilization)
        latency = (c.base_rtt_ms + c.queue_delay_ms * u / (1.0 - u)) * lat_noise[t]

        kpis = KpiVector(
            dl_throughput_mbps=delivered,
            ul_throughput_mbps=c.ul_ratio * delivered + c.ul_floor_mbps * ul_noise[t],
            dl_retx_count=int(dl_retx[t]),
            ul_retx_count=int(ul_retx[t]),
            sinr_db=float(sinr[t]),
            rsrp_dbm=float(rsrp[t]),
            carrier_freq_mhz=c.carrier_freq_mhz,
            channel_util=util,
            cpe_wifi_rssi_dbm=float(rssi[t]),
            cpe_link_rate_mbps=float(link_rate[t]),
        )
        rows.append((t, kpis, state.level, played, stalled, delivered * tp_noise[t], float(latency)))
        if trace is not None:
            trace.append(StepTrace(cap_t, delivered, demand, state.buffer_s, state.phase,
                                   state.level, ewma_used, decided))

    # the client reports its startup time once per session; every sample of
    # the session carries it
    startup_ms = 1000.0 * state.startup_s
    samples = []
    for t, kpis, level, played, stalled, client_tp, latency in rows:
        kqis = KqiVector(
            resolution_level=level if played >= 0.5 else 0,
            frame_rate_fps=media.fps * played,
            initial_startup_ms=startup_ms,
            avg_stall_ms=1000.0 * stalled,
            client_throughput_mbps=float(client_tp),
            latency_ms=latency,
        )
        samples.append(Sample(experiment_id, t, config, kpis, kqis))
    return samples


@dataclass(frozen=True)
class CampaignConfig:
    scenarios: tuple[ScenarioConfig, ...] = field(default_factory=lambda: tuple(default_scenarios()))
    experiments_per_config: int = 60
    constants: SimulatorConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("campaign needs at least one scenario")
        if self.experiments_per_config < 1:
            raise ValueError("experiments_per_config must be >= 1")


def _run(args):
    config, seed, constants, experiment_id = args
    return simulate_session(config, seed, constants, experiment_id)


def generate_campaign(campaign: CampaignConfig, master_seed: int, workers: int = 1) -> list[Sample]:
    """Simulate every (scenario, experiment) pair.

    Experiment ids run config-major; session seeds derive from
    ``(master_seed, config_index, experiment_index)`` so the result does not
    depend on ``workers``.
    """
    jobs = []
    n = campaign.experiments_per_config
    for ci, config in enumerate(campaign.scenarios):
        for ei in range(n):
            jobs.append((config, (master_seed, ci, ei), campaign.constants, ci * n + ei))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            sessions = list(pool.map(_run, jobs, chunksize=16))
    else:
        sessions = [_run(j) for j in jobs]
    return [s for session in sessions for s in session]
