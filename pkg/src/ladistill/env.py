"""Episodic MCS-selection MDP on top of :mod:`ladistill.linksim`.

An episode is the life of one packet: first transmission until it is
decoded or dropped after ``N`` attempts. The link (fading, CQI pipeline,
HARQ history) persists across episodes within a scenario.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import mcs
from .errors import ConfigurationError, SimulationStateError
from .linksim import LinkSimulator, ScenarioConfig

STATE_DIM = 16
N_ACTIONS = mcs.N_MCS
ACK_EWMA_FACTOR = 0.1
HARQ_HISTORY = 4

FEATURE_NAMES = (
    "cqi",
    "cqi_age",
    "sinr_est",
    "harq_t1",
    "harq_t2",
    "harq_t3",
    "harq_t4",
    "attempt_frac",
    "effective_sinr",
    "ack_ewma",
    "last_mcs",
    "antenna_code",
    "bandwidth",
    "power",
    "speed",
    "indoor",
)
SEMI_STATIC = slice(11, 16)


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.5
    max_tx: int = 5

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")
        if self.max_tx < 1:
            raise ConfigurationError("max_tx must be >= 1")

    def reward(self, success: bool, attempt: int, m: int) -> float:
        if success:
            return float(mcs.SPECTRAL_EFFICIENCY[m])
        return -self.alpha * attempt


@dataclass
class EpisodeRecord:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    next_states: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    successes: list = field(default_factory=list)
    sinr_eff: list = field(default_factory=list)
    ttis: list = field(default_factory=list)

    @property
    def attempts_used(self) -> int:
        return len(self.actions)

    @property
    def delivered(self) -> bool:
        return bool(self.successes and self.successes[-1])

    @property
    def outcome(self) -> str:
        return "delivered" if self.delivered else "dropped"

    @property
    def delivered_se(self) -> float:
        return float(mcs.SPECTRAL_EFFICIENCY[self.actions[-1]]) if self.delivered else 0.0

    @property
    def throughput(self) -> float:
        """Delivered SE per elapsed TTI of the packet; 0 for drops."""
        return self.delivered_se / self.attempts_used if self.delivered else 0.0


def semi_static_features(cfg: ScenarioConfig) -> tuple:
    return (
        1.0 if cfg.antenna_array == "mMIMO64" else 0.0,
        cfg.bandwidth_mhz / 100.0,
        cfg.dl_tx_power_w / 100.0,
        cfg.fb_speed_mps / 30.0,
        1.0 if cfg.indoor else 0.0,
    )


class LinkAdaptationEnv:
    """MDP wrapper; one instance per actor.

    Parameters
    ----------
    cfg : ScenarioConfig
    seed : int
        Seed of the underlying simulator.
    reward : RewardConfig, optional
        ``max_tx`` defaults to the scenario's maximum number of transmissions.
    """

    def __init__(self, cfg: ScenarioConfig, seed: int, reward: RewardConfig | None = None):
        self.cfg = cfg
        self.sim = LinkSimulator(cfg, seed)
        self.reward_cfg = reward if reward is not None else RewardConfig(max_tx=cfg.max_dl_tx)
        if self.reward_cfg.max_tx != cfg.max_dl_tx:
            raise ConfigurationError("reward max_tx must match the scenario's max_dl_tx")
        self._static = semi_static_features(cfg)
        self._harq = [1.0] * HARQ_HISTORY
        self._ack_ewma = 1.0
        self._last_mcs = 0
        self._attempt = 0
        self._eff_db = 0.0
        self._active = False

    @property
    def max_tx(self) -> int:
        return self.reward_cfg.max_tx

    @property
    def attempt(self) -> int:
        return self._attempt

    @property
    def active(self) -> bool:
        return self._active

    def state(self) -> np.ndarray:
        sim = self.sim
        h = self._harq
        return np.array(
            (
                sim.cqi / 15.0,
                sim.cqi_age / 10.0,
                sim.sinr_est_db / 40.0,
                h[0],
                h[1],
                h[2],
                h[3],
                self._attempt / self.max_tx,
                self._eff_db / 40.0,
                self._ack_ewma,
                self._last_mcs / 27.0,
            )
            + self._static
        )

    def reset(self) -> np.ndarray:
        """Start a new packet and return its first state."""
        self.sim.start_packet()
        self._attempt = 0
        self._eff_db = 0.0
        self._active = True
        return self.state()

    def step(self, action: int):
        """Transmit with MCS ``action``.

        Returns ``(next_state, reward, info)``; ``next_state`` is ``None``
        when the packet is delivered or dropped.
        """
        if not self._active:
            raise SimulationStateError("episode finished; call reset()")
        mcs._check_index(action)
        res = self.sim.transmit(action)
        reward = self.reward_cfg.reward(res.success, res.attempt, action)
        ack = 1.0 if res.success else 0.0
        self._harq = [ack] + self._harq[:-1]
        self._ack_ewma += ACK_EWMA_FACTOR * (ack - self._ack_ewma)
        self._last_mcs = int(action)
        info = {
            "success": res.success,
            "attempt": res.attempt,
            "sinr_eff": res.effective_sinr_db,
            "sinr": res.instantaneous_sinr_db,
            "tti": self.sim.tti,
        }
        if res.terminated:
            self._active = False
            self._attempt = 0
            self._eff_db = 0.0
            return None, reward, info
        self._attempt = res.attempt + 1
        self._eff_db = res.effective_sinr_db
        return self.state(), reward, info


def run_episode(env: LinkAdaptationEnv, policy) -> EpisodeRecord:
    """Play one packet with ``policy`` (callable ``state -> action``)."""
    ep = EpisodeRecord()
    observe = getattr(policy, "observe", None)
    s = env.reset()
    while True:
        a = int(policy(s))
        s2, r, info = env.step(a)
        if observe is not None:
            observe(a, info["success"], info["attempt"])
        ep.states.append(s)
        ep.actions.append(a)
        ep.rewards.append(r)
        ep.next_states.append(s2)
        ep.dones.append(s2 is None)
        ep.successes.append(info["success"])
        ep.sinr_eff.append(info["sinr_eff"])
        ep.ttis.append(info["tti"])
        if s2 is None:
            return ep
        s = s2


def episode_return(ep: EpisodeRecord, gamma: float = 1.0) -> float:
    """Discounted sum of rewards; ``gamma=1`` gives the undiscounted return."""
    if not ep.dones or not ep.dones[-1]:
        raise SimulationStateError("episode not completed")
    total = 0.0
    discount = 1.0
    for r in ep.rewards:
        total += discount * r
        discount *= gamma
        if discount == 0.0:
            break
    return total


def write_trace(episodes, path) -> None:
    """Write per-transmission rows ``tti,n,action,sinr_eff,success,reward``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tti", "n", "action", "sinr_eff", "success", "reward"])
        for ep in episodes:
            for n, (t, a, se, ok, r) in enumerate(
                zip(ep.ttis, ep.actions, ep.sinr_eff, ep.successes, ep.rewards)
            ):
                w.writerow([t, n, a, f"{se:.6f}", int(ok), f"{r:.6f}"])
