"""DQN teacher training with replay memory and an actor-learner loop.

Actors own one :class:`~ladistill.env.LinkAdaptationEnv` each, act
epsilon-greedily on the latest published parameter snapshot and emit
transitions. A single learner stores them in a :class:`ReplayBuffer`,
takes one gradient step per ``learn_every`` environment steps, refreshes
the target network periodically and publishes new snapshots.

In deterministic mode all actors are stepped round-robin on the learner's
thread, so a run is reproducible bit for bit. Otherwise actors run in
threads and feed the learner through a bounded queue.
"""

from __future__ import annotations

import csv
import logging
import queue
import struct
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import mcs
from .env import N_ACTIONS, STATE_DIM, LinkAdaptationEnv, RewardConfig
from .errors import ConfigurationError, ModelFileError, TrainingError
from .linksim import RandomizationRanges, ScenarioConfig, sample_scenario
from .net import Adam, DenseNet, init_net, save_net, train_step

log = logging.getLogger(__name__)

DIVERGENCE_Q = 10.0 * mcs.SE_MAX


@dataclass
class TrainerConfig:
    gamma: float = 0.5
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.6
    learning_rate: float = 1e-4
    batch_size: int = 256
    target_update_period: int = 2000
    replay_capacity: int = 200_000
    total_env_steps: int = 300_000
    n_actors: int = 4
    seed: int = 0
    dims: tuple = (STATE_DIM,) + (128,) * 7 + (N_ACTIONS,)
    alpha: float = 0.5
    learn_every: int = 4
    learning_starts: int = 2000
    publish_every: int = 500
    scenario_refresh_episodes: int = 50
    queue_capacity: int = 10_000
    checkpoint_every: int = 50_000
    log_every: int = 1000
    deterministic: bool = True

    def __post_init__(self):
        self.dims = tuple(self.dims)
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")
        positive = (
            "learning_rate",
            "batch_size",
            "target_update_period",
            "replay_capacity",
            "n_actors",
            "learn_every",
            "publish_every",
            "scenario_refresh_episodes",
            "queue_capacity",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.total_env_steps < 0:
            raise ConfigurationError("total_env_steps must be >= 0")

    def epsilon(self, env_step: int) -> float:
        horizon = self.eps_fraction * self.total_env_steps
        if horizon <= 0:
            return self.eps_end
        frac = min(env_step / horizon, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions; oldest entries are overwritten."""

    def __init__(self, capacity: int, state_dim: int = STATE_DIM):
        if capacity <= 0:
            raise ConfigurationError("replay capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, s, a, r, s2, done) -> None:
        i = self.inserted % self.capacity
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        if done:
            self.next_states[i] = 0.0
        else:
            self.next_states[i] = s2
        self.dones[i] = done
        self.inserted += 1

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(0, len(self), size=n)

    def batch(self, idx):
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.dones[idx]

    def stored_states(self) -> np.ndarray:
        """Every stored state, oldest first."""
        n = len(self)
        if self.inserted <= self.capacity:
            return self.states[:n].copy()
        start = self.inserted % self.capacity
        return np.concatenate([self.states[start:], self.states[:start]])


REPLAY_MAGIC = b"LADR"
REPLAY_VERSION = 1
_REPLAY_HEADER = struct.Struct("<IIQQ")


def save_replay(replay: ReplayBuffer, path) -> None:
    """Dump the occupied slots of the ring buffer.

    Layout: ``b"LADR"``, ``<IIQQ`` (version, state_dim, capacity, inserted),
    then for the ``len`` occupied slots in slot order: states ``<f8``,
    actions ``<i8``, rewards ``<f8``, next_states ``<f8``, dones ``u1``.
    """
    n = len(replay)
    with open(path, "wb") as fh:
        fh.write(REPLAY_MAGIC)
        fh.write(_REPLAY_HEADER.pack(REPLAY_VERSION, replay.states.shape[1], replay.capacity, replay.inserted))
        fh.write(replay.states[:n].astype("<f8").tobytes())
        fh.write(replay.actions[:n].astype("<i8").tobytes())
        fh.write(replay.rewards[:n].astype("<f8").tobytes())
        fh.write(replay.next_states[:n].astype("<f8").tobytes())
        fh.write(replay.dones[:n].astype("u1").tobytes())


def load_replay(path) -> ReplayBuffer:
    data = Path(path).read_bytes()
    if data[:4] != REPLAY_MAGIC:
        raise ModelFileError(f"{path}: bad magic at offset 0")
    if len(data) < 4 + _REPLAY_HEADER.size:
        raise ModelFileError(f"{path}: truncated header at offset {len(data)}")
    version, sdim, capacity, inserted = _REPLAY_HEADER.unpack_from(data, 4)
    if version != REPLAY_VERSION:
        raise ModelFileError(f"{path}: unsupported version {version} at offset 4")
    n = min(inserted, capacity)
    off = 4 + _REPLAY_HEADER.size
    expected = off + n * (8 * sdim * 2 + 8 + 8 + 1)
    if len(data) != expected:
        raise ModelFileError(f"{path}: size {len(data)} != {expected}; records start at offset {off}")
    replay = ReplayBuffer(capacity, sdim)
    for name, dtype, width in (
        ("states", "<f8", sdim),
        ("actions", "<i8", 1),
        ("rewards", "<f8", 1),
        ("next_states", "<f8", sdim),
        ("dones", "u1", 1),
    ):
        arr = np.frombuffer(data, dtype=dtype, count=n * width, offset=off)
        target = getattr(replay, name)
        target[:n] = arr.reshape(target[:n].shape).astype(target.dtype)
        off += arr.nbytes
    replay.inserted = inserted
    return replay


def act_epsilon_greedy(net: DenseNet, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability ``epsilon``, else greedy (lowest index on ties)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(net.forward(state)))


def td_target(rewards, next_states, dones, target_net: DenseNet, gamma: float) -> np.ndarray:
    """``r`` for terminal rows, ``r + gamma * max_a Q_target(s', a)`` otherwise."""
    rewards = np.asarray(rewards, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    y = rewards.copy()
    live = ~dones
    if gamma > 0.0 and live.any():
        y[live] += gamma * target_net.forward(np.asarray(next_states)[live]).max(axis=1)
    return y


def td_loss_fn(actions: np.ndarray, targets: np.ndarray):
    """Mean ``0.5 * (Q(s, a) - y)^2`` with gradient only through the taken action."""
    rows = np.arange(len(actions))

    def fn(q):
        err = q[rows, actions] - targets
        grad = np.zeros_like(q)
        grad[rows, actions] = err / len(actions)
        return 0.5 * float(np.mean(err * err)), grad

    return fn


class SnapshotStore:
    """Versioned, immutable parameter snapshots published by the learner."""

    def __init__(self, net: DenseNet):
        self._lock = threading.Lock()
        self._net = net.copy()
        self._version = 0

    def publish(self, net: DenseNet) -> int:
        snap = net.copy()
        with self._lock:
            self._version += 1
            self._net = snap
            return self._version

    def latest(self) -> tuple[int, DenseNet]:
        with self._lock:
            return self._version, self._net


ScenarioFn = Callable[[np.random.Generator], ScenarioConfig]


def ranges_sampler(ranges: RandomizationRanges) -> ScenarioFn:
    ranges.validate()

    def fn(rng):
        return sample_scenario(ranges, int(rng.integers(2**31)))

    return fn


class Actor:
    """Owns one environment; refreshes its scenario every ``refresh`` episodes."""

    def __init__(self, scenario_fn: ScenarioFn, seed, refresh: int, alpha: float):
        self.rng = np.random.default_rng(seed)
        self.scenario_fn = scenario_fn
        self.refresh = refresh
        self.alpha = alpha
        self.episodes = 0
        self.env = None
        self.state = None
        self.episode_return = 0.0
        self.finished_returns: list[float] = []
        self._new_scenario()

    def _new_scenario(self):
        cfg = self.scenario_fn(self.rng)
        self.env = LinkAdaptationEnv(
            cfg, int(self.rng.integers(2**31)), RewardConfig(self.alpha, cfg.max_dl_tx)
        )
        self.state = self.env.reset()

    def choose(self, q: np.ndarray, epsilon: float) -> int:
        if epsilon > 0.0 and self.rng.random() < epsilon:
            return int(self.rng.integers(N_ACTIONS))
        return int(np.argmax(q))

    def step(self, action: int):
        s = self.state
        s2, r, _ = self.env.step(action)
        self.episode_return += r
        done = s2 is None
        if done:
            self.finished_returns.append(self.episode_return)
            self.episode_return = 0.0
            self.episodes += 1
            if self.episodes % self.refresh == 0:
                self._new_scenario()
            else:
                self.state = self.env.reset()
        else:
            self.state = s2
        return s, action, r, s2, done


@dataclass
class TrainResult:
    net: DenseNet
    replay: ReplayBuffer
    log: list = field(default_factory=list)
    env_steps: int = 0
    grad_steps: int = 0


class _Learner:
    def __init__(self, cfg: TrainerConfig, net: DenseNet, rng, on_target_update=None):
        self.cfg = cfg
        self.net = net
        self.target = net.copy()
        self.optim = Adam(net, cfg.learning_rate)
        self.rng = rng
        self.grad_steps = 0
        self.losses: list[float] = []
        self.qs: list[float] = []
        self.on_target_update = on_target_update

    def learn(self, replay: ReplayBuffer) -> None:
        cfg = self.cfg
        idx = replay.sample_indices(self.rng, cfg.batch_size)
        s, a, r, s2, d = replay.batch(idx)
        y = td_target(r, s2, d, self.target, cfg.gamma)
        fn = td_loss_fn(a, y)
        captured = {}

        def guarded(q):
            captured["mean_abs_q"] = float(np.mean(np.abs(q)))
            return fn(q)

        loss = train_step(self.net, s, guarded, self.optim)
        mean_abs_q = captured["mean_abs_q"]
        if mean_abs_q > DIVERGENCE_Q:
            raise TrainingError(
                f"Q divergence at grad step {self.grad_steps}: mean |Q| = {mean_abs_q:.3g} "
                f"> {DIVERGENCE_Q:.3g}, last loss {loss:.4g}"
            )
        self.losses.append(loss)
        self.qs.append(mean_abs_q)
        self.grad_steps += 1
        if self.grad_steps % cfg.target_update_period == 0:
            self.target.load_state(self.net)
            if self.on_target_update is not None:
                self.on_target_update(self.grad_steps, self.net, self.target)


def train_teacher(
    config: TrainerConfig,
    ranges: RandomizationRanges | None = None,
    *,
    scenario_fn: ScenarioFn | None = None,
    init: DenseNet | None = None,
    checkpoint_dir=None,
    on_target_update=None,
) -> TrainResult:
    """Train a DQN under domain randomization.

    Parameters
    ----------
    config : TrainerConfig
    ranges : RandomizationRanges, optional
        Randomization lists; defaults to the full table.
    scenario_fn : callable, optional
        Overrides ``ranges``: ``scenario_fn(rng) -> ScenarioConfig``.
    init : DenseNet, optional
        Starting network (copied); defaults to ``init_net(config.dims, seed)``.
    checkpoint_dir : path, optional
        Model checkpoints every ``config.checkpoint_every`` env steps.
    """
    if scenario_fn is None:
        scenario_fn = ranges_sampler(ranges if ranges is not None else RandomizationRanges())
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_actors + 2)
    net = init.copy() if init is not None else init_net(config.dims, int(seeds[0].generate_state(1)[0]))
    replay = ReplayBuffer(config.replay_capacity)
    if config.total_env_steps == 0:
        return TrainResult(net, replay)

    learner = _Learner(config, net, np.random.default_rng(seeds[1]), on_target_update)
    snapshots = SnapshotStore(net)
    actors = [
        Actor(scenario_fn, seeds[2 + i], config.scenario_refresh_episodes, config.alpha)
        for i in range(config.n_actors)
    ]
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    run = _deterministic_loop if config.deterministic else _threaded_loop
    rows, env_steps = run(config, learner, snapshots, actors, replay, checkpoint_dir)
    return TrainResult(net, replay, rows, env_steps, learner.grad_steps)


class _Progress:
    def __init__(self, config, learner, actors, checkpoint_dir):
        self.config = config
        self.learner = learner
        self.actors = actors
        self.checkpoint_dir = checkpoint_dir
        self.rows = []

    def after_env_step(self, env_steps: int) -> None:
        cfg = self.config
        if env_steps % cfg.log_every == 0:
            returns = [r for a in self.actors for r in a.finished_returns]
            for a in self.actors:
                a.finished_returns.clear()
            lr = self.learner
            row = {
                "step": env_steps,
                "mean_loss": float(np.mean(lr.losses)) if lr.losses else float("nan"),
                "mean_q": float(np.mean(lr.qs)) if lr.qs else float("nan"),
                "epsilon": cfg.epsilon(env_steps),
                "eval_reward": float(np.mean(returns)) if returns else float("nan"),
            }
            lr.losses.clear()
            lr.qs.clear()
            self.rows.append(row)
            log.debug("train %s", row)
        if self.checkpoint_dir is not None and env_steps % cfg.checkpoint_every == 0:
            save_net(self.learner.net, Path(self.checkpoint_dir) / f"checkpoint_{env_steps:08d}.ladn")


def _deterministic_loop(config, learner, snapshots, actors, replay, checkpoint_dir):
    progress = _Progress(config, learner, actors, checkpoint_dir)
    env_steps = 0
    _, snap = snapshots.latest()
    while env_steps < config.total_env_steps:
        eps = config.epsilon(env_steps)
        active = actors[: config.total_env_steps - env_steps]
        states = np.stack([a.state for a in active])
        qs = snap.forward(states)
        for actor, q in zip(active, qs):
            replay.add(*actor.step(actor.choose(q, eps)))
            env_steps += 1
            if env_steps % config.learn_every == 0 and len(replay) >= config.learning_starts:
                learner.learn(replay)
                if learner.grad_steps % config.publish_every == 0:
                    snapshots.publish(learner.net)
                    _, snap = snapshots.latest()
            progress.after_env_step(env_steps)
    return progress.rows, env_steps


def _threaded_loop(config, learner, snapshots, actors, replay, checkpoint_dir):
    progress = _Progress(config, learner, actors, checkpoint_dir)
    transitions: queue.Queue = queue.Queue(maxsize=config.queue_capacity)
    stop = threading.Event()
    counter = {"env_steps": 0}
    errors: list[BaseException] = []

    def actor_loop(actor: Actor):
        try:
            while not stop.is_set():
                _, snap = snapshots.latest()
                eps = config.epsilon(counter["env_steps"])
                a = actor.choose(snap.forward(actor.state), eps)
                item = actor.step(a)
                while not stop.is_set():
                    try:
                        transitions.put(item, timeout=0.05)
                        break
                    except queue.Full:
                        continue
        except BaseException as exc:  # surfaced by the learner
            errors.append(exc)
            stop.set()

    threads = [threading.Thread(target=actor_loop, args=(a,), daemon=True) for a in actors]
    for t in threads:
        t.start()
    try:
        while counter["env_steps"] < config.total_env_steps:
            if errors:
                raise errors[0]
            try:
                item = transitions.get(timeout=0.5)
            except queue.Empty:
                continue
            replay.add(*item)
            counter["env_steps"] += 1
            env_steps = counter["env_steps"]
            if env_steps % config.learn_every == 0 and len(replay) >= config.learning_starts:
                learner.learn(replay)
                if learner.grad_steps % config.publish_every == 0:
                    snapshots.publish(learner.net)
            progress.after_env_step(env_steps)
    finally:
        stop.set()
        for t in threads:
            t.join(timeout=5.0)
    return progress.rows, counter["env_steps"]


def write_log(rows, path) -> None:
    """Training log CSV ``step,mean_loss,mean_q,epsilon,eval_reward``."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "mean_loss", "mean_q", "epsilon", "eval_reward"])
        w.writeheader()
        for row in rows:
            w.writerow(row)
