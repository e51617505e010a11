"""Desk-scale radio link simulator.

One :class:`LinkSimulator` models the downlink of a single full-buffer UE:
AR(1) log-normal fading around a geometry SINR, a logistic BLER curve per
MCS, chase-combining HARQ and delayed, periodic CQI reports. Scenario
parameters are drawn from :class:`RandomizationRanges` by
:func:`sample_scenario`.
"""

from __future__ import annotations

import bisect
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import mcs
from .errors import ConfigurationError, SimulationStateError

DEFAULT_SLOPE_PER_DB = 1.5
CQI_BLER_TARGET = 0.1
N_CQI = 16

# geometry model constants
BASE_SINR_DB = 22.0
REF_RADIUS_M = 166.0
PATH_DB_PER_DOUBLING = 6.0
REF_POWER_W = 20.0
INDOOR_PENALTY_DB = 8.0
MMIMO_GAIN_DB = 4.0
NOISE_RISE_PER_UE = 0.05
SPEED_DECORRELATION_MPS = 15.0
MAX_RHO = 0.99
FADING_SIGMA_DB = {"MIMO4": 6.0, "mMIMO64": 4.0}

ANTENNA_ARRAYS = ("MIMO4", "mMIMO64")

# representative MCS per 4-bit CQI level: evenly strided over 0..27
CQI_MCS = tuple(int(round(k * (mcs.N_MCS - 1) / (N_CQI - 1))) for k in range(N_CQI))


@dataclass(frozen=True)
class RandomizationRanges:
    """Candidate values per domain-randomization parameter."""

    antenna_array: tuple = ANTENNA_ARRAYS
    cell_radius_m: tuple = (166.0, 300.0, 600.0, 900.0, 1200.0)
    bandwidth_mhz: tuple = (20.0, 40.0, 50.0, 80.0, 100.0)
    n_subbands: tuple = (51, 106, 133, 217, 273)
    dl_tx_power_w: tuple = (20.0, 40.0, 50.0, 80.0, 100.0)
    ue_antennas: tuple = (2, 4)
    max_rank: tuple = (2, 4)
    max_dl_tx: tuple = (5,)
    n_fb_ues: tuple = (1, 5, 10)
    n_mbb_ues: tuple = (5, 10, 25, 50, 100, 150)
    fb_speed_mps: tuple = (0.67, 10.0, 15.0, 30.0)
    mbb_speed_mps: tuple = (0.67, 1.5, 3.0)
    indoor_prob: tuple = (0.2, 0.4, 0.8)
    cqi_period_ttis: tuple = (5,)
    cqi_delay_ttis: tuple = (2,)

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            values = getattr(self, f.name)
            if len(values) == 0:
                raise ConfigurationError(f"empty candidate list for {f.name}")
        if any(a not in ANTENNA_ARRAYS for a in self.antenna_array):
            raise ConfigurationError(f"unknown antenna array in {self.antenna_array}")
        if any(n < 1 for n in self.max_dl_tx):
            raise ConfigurationError("max_dl_tx must be >= 1")
        if any(not 0.0 <= p <= 1.0 for p in self.indoor_prob):
            raise ConfigurationError("indoor_prob must lie in [0, 1]")
        if any(r <= 0 for r in self.cell_radius_m) or any(p <= 0 for p in self.dl_tx_power_w):
            raise ConfigurationError("cell radius and power must be positive")
        if any(p < 1 for p in self.cqi_period_ttis) or any(d < 0 for d in self.cqi_delay_ttis):
            raise ConfigurationError("cqi period must be >= 1 and delay >= 0")

    @classmethod
    def singleton(cls, cfg: "ScenarioConfig") -> "RandomizationRanges":
        """Ranges that can only produce ``cfg`` (indoor flag pinned via probability 0/1)."""
        kw = {f.name: (getattr(cfg, f.name),) for f in dataclasses.fields(cls)}
        kw["indoor_prob"] = (1.0 if cfg.indoor else 0.0,)
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in dataclasses.asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomizationRanges":
        return cls(**{k: tuple(v) for k, v in d.items()})


@dataclass(frozen=True)
class ScenarioConfig:
    antenna_array: str
    cell_radius_m: float
    bandwidth_mhz: float
    n_subbands: int
    dl_tx_power_w: float
    ue_antennas: int
    max_rank: int
    max_dl_tx: int
    n_fb_ues: int
    n_mbb_ues: int
    fb_speed_mps: float
    mbb_speed_mps: float
    indoor_prob: float
    indoor: bool
    mean_sinr_db: float
    fading_rho: float
    fading_sigma_db: float
    cqi_delay_ttis: int
    cqi_period_ttis: int
    seed: int
    gap_db: float = mcs.DEFAULT_GAP_DB
    slope_per_db: float = DEFAULT_SLOPE_PER_DB
    # forces every attempt to fail with this probability (degenerate test channels)
    bler_override: float | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls(**json.loads(text))

    def with_sinr_offset(self, offset_db: float) -> "ScenarioConfig":
        return dataclasses.replace(self, mean_sinr_db=self.mean_sinr_db + offset_db)


def geometry_sinr_db(
    antenna_array: str,
    cell_radius_m: float,
    dl_tx_power_w: float,
    indoor: bool,
    n_total_ues: int,
) -> float:
    """Mean SINR of a UE from the deployment knobs (documented desk model)."""
    path = PATH_DB_PER_DOUBLING * math.log2(cell_radius_m / REF_RADIUS_M)
    power = 10.0 * math.log10(dl_tx_power_w / REF_POWER_W)
    indoor_loss = INDOOR_PENALTY_DB if indoor else 0.0
    array_gain = MMIMO_GAIN_DB if antenna_array == "mMIMO64" else 0.0
    noise_rise = 10.0 * math.log10(1.0 + NOISE_RISE_PER_UE * n_total_ues)
    return BASE_SINR_DB - path + power - indoor_loss + array_gain - noise_rise


def fading_params(antenna_array: str, speed_mps: float) -> tuple[float, float]:
    rho = min(max(math.exp(-speed_mps / SPEED_DECORRELATION_MPS), 0.0), MAX_RHO)
    return rho, FADING_SIGMA_DB[antenna_array]


def make_scenario(
    *,
    antenna_array: str = "MIMO4",
    cell_radius_m: float = 300.0,
    bandwidth_mhz: float = 40.0,
    n_subbands: int = 106,
    dl_tx_power_w: float = 40.0,
    ue_antennas: int = 2,
    max_rank: int = 2,
    max_dl_tx: int = 5,
    n_fb_ues: int = 1,
    n_mbb_ues: int = 0,
    fb_speed_mps: float = 0.67,
    mbb_speed_mps: float = 0.67,
    indoor: bool = False,
    cqi_delay_ttis: int = 2,
    cqi_period_ttis: int = 5,
    seed: int = 0,
    **overrides,
) -> ScenarioConfig:
    """Build a fixed scenario, deriving link parameters with the standard mapping.

    ``overrides`` replace derived fields (``mean_sinr_db``, ``fading_rho``,
    ``fading_sigma_db``, ``gap_db``, ``slope_per_db``, ``bler_override``).
    """
    if antenna_array not in ANTENNA_ARRAYS:
        raise ConfigurationError(f"unknown antenna array {antenna_array!r}")
    rho, sigma = fading_params(antenna_array, fb_speed_mps)
    cfg = ScenarioConfig(
        antenna_array=antenna_array,
        cell_radius_m=float(cell_radius_m),
        bandwidth_mhz=float(bandwidth_mhz),
        n_subbands=int(n_subbands),
        dl_tx_power_w=float(dl_tx_power_w),
        ue_antennas=int(ue_antennas),
        max_rank=int(max_rank),
        max_dl_tx=int(max_dl_tx),
        n_fb_ues=int(n_fb_ues),
        n_mbb_ues=int(n_mbb_ues),
        fb_speed_mps=float(fb_speed_mps),
        mbb_speed_mps=float(mbb_speed_mps),
        indoor_prob=1.0 if indoor else 0.0,
        indoor=bool(indoor),
        mean_sinr_db=geometry_sinr_db(
            antenna_array, cell_radius_m, dl_tx_power_w, indoor, n_fb_ues + n_mbb_ues
        ),
        fading_rho=rho,
        fading_sigma_db=sigma,
        cqi_delay_ttis=int(cqi_delay_ttis),
        cqi_period_ttis=int(cqi_period_ttis),
        seed=int(seed),
    )
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def sample_scenario(ranges: RandomizationRanges, seed: int) -> ScenarioConfig:
    """Draw one scenario uniformly from every candidate list."""
    ranges.validate()
    rng = np.random.default_rng(seed)

    def pick(values):
        return values[int(rng.integers(len(values)))]

    antenna = pick(ranges.antenna_array)
    radius = float(pick(ranges.cell_radius_m))
    bandwidth = float(pick(ranges.bandwidth_mhz))
    n_subbands = int(pick(ranges.n_subbands))
    power = float(pick(ranges.dl_tx_power_w))
    ue_antennas = int(pick(ranges.ue_antennas))
    max_rank = int(pick(ranges.max_rank))
    max_tx = int(pick(ranges.max_dl_tx))
    n_fb = int(pick(ranges.n_fb_ues))
    n_mbb = int(pick(ranges.n_mbb_ues))
    fb_speed = float(pick(ranges.fb_speed_mps))
    mbb_speed = float(pick(ranges.mbb_speed_mps))
    indoor_prob = float(pick(ranges.indoor_prob))
    period = int(pick(ranges.cqi_period_ttis))
    delay = int(pick(ranges.cqi_delay_ttis))
    indoor = bool(rng.random() < indoor_prob)

    rho, sigma = fading_params(antenna, fb_speed)
    return ScenarioConfig(
        antenna_array=antenna,
        cell_radius_m=radius,
        bandwidth_mhz=bandwidth,
        n_subbands=n_subbands,
        dl_tx_power_w=power,
        ue_antennas=ue_antennas,
        max_rank=max_rank,
        max_dl_tx=max_tx,
        n_fb_ues=n_fb,
        n_mbb_ues=n_mbb,
        fb_speed_mps=fb_speed,
        mbb_speed_mps=mbb_speed,
        indoor_prob=indoor_prob,
        indoor=indoor,
        mean_sinr_db=geometry_sinr_db(antenna, radius, power, indoor, n_fb + n_mbb),
        fading_rho=rho,
        fading_sigma_db=sigma,
        cqi_delay_ttis=delay,
        cqi_period_ttis=period,
        seed=int(seed),
    )


# --------------------------------------------------------------------------
# per-TTI link dynamics


@dataclass
class LinkState:
    current_fading_db: float = 0.0
    accumulated_energy: float = 0.0
    tti: int = 0
    last_cqi: int = 0
    cqi_age_ttis: int = 0
    attempts: int = 0
    in_flight: bool = False


class TxResult(NamedTuple):
    success: bool
    effective_sinr_db: float
    instantaneous_sinr_db: float
    attempt: int
    terminated: bool


def step_fading(link: LinkState, cfg: ScenarioConfig, rng: np.random.Generator) -> float:
    """Advance the AR(1) fading offset by one TTI and return the SINR (dB)."""
    rho = cfg.fading_rho
    eps = rng.standard_normal()
    link.current_fading_db = rho * link.current_fading_db + cfg.fading_sigma_db * math.sqrt(
        1.0 - rho * rho
    ) * eps
    link.tti += 1
    return cfg.mean_sinr_db + link.current_fading_db


def bler(m, sinr_db, slope_per_db: float = DEFAULT_SLOPE_PER_DB, gap_db: float = mcs.DEFAULT_GAP_DB):
    """Logistic BLER of MCS ``m`` at ``sinr_db``; 0.5 at the required SINR.

    Scalar ``m`` and ``sinr_db`` return a float; arrays broadcast.
    """
    if slope_per_db <= 0:
        raise ValueError("slope_per_db must be positive")
    if np.ndim(m) == 0 and np.ndim(sinr_db) == 0:
        theta = mcs.required_sinr_db(m, gap_db)
        z = slope_per_db * (float(sinr_db) - theta)
        if z > 700.0:
            return 0.0
        return 1.0 / (1.0 + math.exp(z))
    m = np.asarray(m)
    if m.dtype.kind not in "iu" or np.any((m < 0) | (m >= mcs.N_MCS)):
        raise ValueError("MCS indices must be integers in 0..27")
    theta = mcs.required_sinr_table(gap_db)[m]
    z = slope_per_db * (np.asarray(sinr_db, dtype=float) - theta)
    return np.where(z > 700.0, 0.0, 1.0 / (1.0 + np.exp(np.minimum(z, 700.0))))


def transmit(link: LinkState, m: int, cfg: ScenarioConfig, rng: np.random.Generator) -> TxResult:
    """One HARQ attempt of the in-flight packet with MCS ``m``."""
    if not link.in_flight:
        raise SimulationStateError("no packet in flight; call start_packet first")
    if link.attempts >= cfg.max_dl_tx:
        raise SimulationStateError("packet already used every allowed transmission")
    sinr = step_fading(link, cfg, rng)
    link.accumulated_energy += 10.0 ** (sinr / 10.0)
    eff = 10.0 * math.log10(link.accumulated_energy)
    if cfg.bler_override is None:
        p_err = bler(m, eff, cfg.slope_per_db, cfg.gap_db)
    else:
        mcs._check_index(m)
        p_err = cfg.bler_override
    success = bool(rng.random() >= p_err)
    attempt = link.attempts
    link.attempts += 1
    terminated = success or link.attempts >= cfg.max_dl_tx
    if terminated:
        link.in_flight = False
        link.accumulated_energy = 0.0
    return TxResult(success, eff, sinr, attempt, terminated)


def start_packet(link: LinkState) -> None:
    link.in_flight = True
    link.attempts = 0
    link.accumulated_energy = 0.0


def cqi_thresholds_db(gap_db: float = mcs.DEFAULT_GAP_DB, slope_per_db: float = DEFAULT_SLOPE_PER_DB) -> np.ndarray:
    """SINR above which each CQI level's representative MCS has BLER <= 0.1."""
    theta = mcs.required_sinr_table(gap_db)[list(CQI_MCS)]
    return theta + math.log((1.0 - CQI_BLER_TARGET) / CQI_BLER_TARGET) / slope_per_db


def cqi_from_sinr(sinr_db: float, gap_db: float = mcs.DEFAULT_GAP_DB, slope_per_db: float = DEFAULT_SLOPE_PER_DB) -> int:
    """Largest CQI level whose representative MCS meets BLER <= 0.1; 0 if none."""
    thr = _cached_thresholds(gap_db, slope_per_db)
    return max(bisect.bisect_right(thr, sinr_db) - 1, 0)


def cqi_to_sinr_db(cqi: int, gap_db: float = mcs.DEFAULT_GAP_DB, slope_per_db: float = DEFAULT_SLOPE_PER_DB) -> float:
    """Representative SINR of a CQI level (lower edge of its bucket)."""
    return _cached_thresholds(gap_db, slope_per_db)[cqi]


_THRESHOLD_CACHE: dict = {}


def _cached_thresholds(gap_db, slope_per_db):
    key = (gap_db, slope_per_db)
    thr = _THRESHOLD_CACHE.get(key)
    if thr is None:
        thr = tuple(float(x) for x in cqi_thresholds_db(gap_db, slope_per_db))
        _THRESHOLD_CACHE[key] = thr
    return thr


@dataclass
class _Report:
    measured_tti: int
    cqi: int


class LinkSimulator:
    """A single UE link with CQI reporting, owned by one actor.

    Parameters
    ----------
    cfg : ScenarioConfig
        Scenario and link parameters.
    seed : int
        Seed of the simulator's private generator. ``(cfg, seed)`` fixes
        every trajectory.
    """

    def __init__(self, cfg: ScenarioConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.link = LinkState()
        self.link.current_fading_db = cfg.fading_sigma_db * self.rng.standard_normal()
        cqi = cqi_from_sinr(cfg.mean_sinr_db + self.link.current_fading_db, cfg.gap_db, cfg.slope_per_db)
        self.link.last_cqi = cqi
        self._visible = _Report(0, cqi)
        self._pending: list[_Report] = []

    @property
    def tti(self) -> int:
        return self.link.tti

    @property
    def cqi(self) -> int:
        return self._visible.cqi

    @property
    def cqi_age(self) -> int:
        return self.link.tti - self._visible.measured_tti

    @property
    def sinr_est_db(self) -> float:
        return cqi_to_sinr_db(self._visible.cqi, self.cfg.gap_db, self.cfg.slope_per_db)

    def start_packet(self) -> None:
        start_packet(self.link)

    def transmit(self, m: int) -> TxResult:
        cfg = self.cfg
        measure_tti = self.link.tti
        res = transmit(self.link, m, cfg, self.rng)
        if measure_tti % cfg.cqi_period_ttis == 0:
            cqi = cqi_from_sinr(res.instantaneous_sinr_db, cfg.gap_db, cfg.slope_per_db)
            self._pending.append(_Report(measure_tti, cqi))
        now = self.link.tti
        while self._pending and self._pending[0].measured_tti + cfg.cqi_delay_ttis <= now:
            self._visible = self._pending.pop(0)
        self.link.last_cqi = self._visible.cqi
        self.link.cqi_age_ttis = self.cqi_age
        return res
