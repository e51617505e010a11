"""Offline policy distillation: teacher datasets and student training.

A dataset pairs states with the teacher's unnormalized Q-vectors. Students
are fitted by minimizing the KL divergence between the temperature-sharpened
teacher softmax and the student's plain softmax.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import NamedTuple

import numpy as np

from .env import N_ACTIONS, STATE_DIM, LinkAdaptationEnv
from .errors import ConfigurationError, ModelFileError, TrainingError
from .linksim import RandomizationRanges
from .net import Adam, DenseNet, init_net, kl_batch_loss, kl_loss, train_step
from .rl import ReplayBuffer, ScenarioFn, ranges_sampler

log = logging.getLogger(__name__)

DATASET_MAGIC = b"LADD"
DATASET_VERSION = 1
DEFAULT_TAU = 0.01
DEFAULT_BATCH = 512
VAL_FRACTION = 0.05


class DistillSample(NamedTuple):
    state: np.ndarray
    q_teacher: np.ndarray


@dataclass(frozen=True, eq=False)
class DistillDataset:
    states: np.ndarray
    q: np.ndarray
    metadata: MappingProxyType

    def __post_init__(self):
        states = np.array(self.states, dtype=np.float64).reshape(-1, STATE_DIM)
        q = np.array(self.q, dtype=np.float64).reshape(-1, N_ACTIONS)
        if states.shape[0] != q.shape[0]:
            raise ConfigurationError("states and q must have the same number of rows")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(q))):
            raise ConfigurationError("dataset contains non-finite values")
        states.setflags(write=False)
        q.setflags(write=False)
        meta = dict(self.metadata)
        meta["count"] = int(states.shape[0])
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "metadata", MappingProxyType(meta))

    @property
    def count(self) -> int:
        return self.states.shape[0]

    def __len__(self) -> int:
        return self.count

    def __iter__(self):
        for s, q in zip(self.states, self.q):
            yield DistillSample(s, q)


def _meta(teacher_id, scenario_tags, generator, seed) -> dict:
    return {
        "teacher_id": teacher_id,
        "scenario_tags": list(scenario_tags),
        "generator": generator,
        "seed": seed,
    }


def gen_dataset(
    teacher: DenseNet,
    ranges: RandomizationRanges | None,
    n_samples: int,
    seed: int,
    *,
    scenario_fn: ScenarioFn | None = None,
    teacher_id: str = "teacher",
    scenario_tags=("randomized",),
    episodes_per_scenario: int = 50,
    n_envs: int = 16,
) -> DistillDataset:
    """Roll the teacher out greedily over fresh scenarios and record ``(s, q_T(s))``.

    ``n_envs`` independent environments advance in lockstep so the teacher
    is queried in batches; each draws a new scenario every
    ``episodes_per_scenario`` packets.
    """
    if scenario_fn is None:
        scenario_fn = ranges_sampler(ranges if ranges is not None else RandomizationRanges())
    meta = _meta(teacher_id, scenario_tags, "fresh_sim", seed)
    if n_samples <= 0:
        return DistillDataset(np.zeros((0, STATE_DIM)), np.zeros((0, N_ACTIONS)), meta)

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_envs)]
    envs = [None] * n_envs
    episodes = [0] * n_envs
    states = [None] * n_envs

    def fresh(i):
        cfg = scenario_fn(rngs[i])
        envs[i] = LinkAdaptationEnv(cfg, int(rngs[i].integers(2**31)))
        states[i] = envs[i].reset()

    for i in range(n_envs):
        fresh(i)
    out_s = np.empty((n_samples, STATE_DIM))
    out_q = np.empty((n_samples, N_ACTIONS))
    k = 0
    while k < n_samples:
        batch = np.stack(states)
        qs = teacher.forward(batch)
        take = min(n_envs, n_samples - k)
        out_s[k : k + take] = batch[:take]
        out_q[k : k + take] = qs[:take]
        k += take
        for i in range(n_envs):
            s2, _, _ = envs[i].step(int(np.argmax(qs[i])))
            if s2 is None:
                episodes[i] += 1
                if episodes[i] % episodes_per_scenario == 0:
                    fresh(i)
                else:
                    states[i] = envs[i].reset()
            else:
                states[i] = s2
    return DistillDataset(out_s, out_q, meta)


def from_replay(teacher: DenseNet, replay: ReplayBuffer, teacher_id: str = "teacher", scenario_tags=("randomized",)) -> DistillDataset:
    """Relabel every state stored in the replay memory with the (final) teacher's Q-values."""
    if len(replay) == 0:
        raise ConfigurationError("replay memory is empty")
    states = replay.stored_states()
    return DistillDataset(states, teacher.forward(states), _meta(teacher_id, scenario_tags, "replay_reuse", None))


def aggregate_shuffle(datasets, seed: int) -> DistillDataset:
    """Concatenate datasets from several teachers and permute the rows."""
    datasets = list(datasets)
    if not datasets:
        raise ConfigurationError("need at least one dataset")
    for d in datasets:
        if d.states.shape[1] != STATE_DIM or d.q.shape[1] != N_ACTIONS:
            raise ConfigurationError("dataset dimension mismatch")
    states = np.concatenate([d.states for d in datasets])
    q = np.concatenate([d.q for d in datasets])
    perm = np.random.default_rng(seed).permutation(len(states))
    tags = []
    for d in datasets:
        for t in d.metadata.get("scenario_tags", []):
            if t not in tags:
                tags.append(t)
    meta = {
        "teacher_id": [d.metadata.get("teacher_id") for d in datasets],
        "scenario_tags": tags,
        "generator": "aggregate",
        "sources": [dict(d.metadata) for d in datasets],
        "seed": seed,
    }
    return DistillDataset(states[perm], q[perm], meta)


def distill(
    dataset: DistillDataset,
    student_dims,
    tau: float = DEFAULT_TAU,
    epochs: int = 20,
    lr: float = 1e-3,
    seed: int = 0,
    *,
    batch_size: int = DEFAULT_BATCH,
    val_fraction: float = VAL_FRACTION,
    history: list | None = None,
) -> DenseNet:
    """Fit a fresh student to the dataset with the temperature-scaled KL loss.

    A seeded ``val_fraction`` split is held out; the parameters with the
    lowest held-out KL over all epochs are returned. Per-epoch
    ``{epoch, train_kl, val_kl, val_agreement, best}`` dicts are appended to
    ``history`` when given.
    """
    if dataset.count == 0:
        raise ConfigurationError("cannot distill from an empty dataset")
    if not tau > 0:
        raise ValueError("tau must be positive")
    rng = np.random.default_rng(seed)
    student = init_net(student_dims, int(rng.integers(2**31)))
    if epochs <= 0:
        return student
    n = dataset.count
    perm = rng.permutation(n)
    n_val = int(round(val_fraction * n)) if n >= 2 else 0
    n_val = min(max(n_val, 1 if n >= 2 else 0), n - 1)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if n_val == 0:
        val_idx = train_idx
    xs, qs = dataset.states, dataset.q
    x_val, q_val = xs[val_idx], qs[val_idx]
    teacher_act = q_val.argmax(axis=1)

    optim = Adam(student, lr)
    best = student.copy()
    best_val = _val_kl(student, x_val, q_val, tau)
    for epoch in range(1, epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        losses = []
        for start in range(0, len(order), batch_size):
            idx = np.sort(order[start : start + batch_size])
            losses.append(train_step(student, xs[idx], kl_batch_loss(qs[idx], tau), optim))
        val = _val_kl(student, x_val, q_val, tau)
        if not np.isfinite(val):
            raise TrainingError(f"non-finite validation KL at epoch {epoch}")
        improved = val < best_val
        if improved:
            best_val = val
            best = student.copy()
        agree = float(np.mean(student.forward(x_val).argmax(axis=1) == teacher_act))
        row = {
            "epoch": epoch,
            "train_kl": float(np.mean(losses)),
            "val_kl": val,
            "val_agreement": agree,
            "best": improved,
        }
        log.debug("distill %s", row)
        if history is not None:
            history.append(row)
    return best


def _val_kl(net: DenseNet, x: np.ndarray, q: np.ndarray, tau: float) -> float:
    loss, _ = kl_loss(q, net.forward(x), tau)
    return float(np.mean(loss))


def argmax_agreement(student: DenseNet, dataset: DistillDataset) -> float:
    return float(np.mean(student.forward(dataset.states).argmax(axis=1) == dataset.q.argmax(axis=1)))


# --------------------------------------------------------------------------
# dataset files: magic, u32 version, u32 state_dim, u32 action_dim,
# u64 count, u32 metadata length, metadata JSON (utf-8), then count rows of
# state_dim + action_dim little-endian f64 values


def save_dataset(ds: DistillDataset, path) -> None:
    meta = json.dumps(dict(ds.metadata), sort_keys=True).encode()
    header = DATASET_MAGIC + struct.pack("<IIIQI", DATASET_VERSION, STATE_DIM, N_ACTIONS, ds.count, len(meta))
    rows = np.concatenate([ds.states, ds.q], axis=1).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(meta)
        fh.write(rows.tobytes())


_HEADER = struct.Struct("<IIIQI")


def load_dataset(path) -> DistillDataset:
    data = Path(path).read_bytes()
    if data[:4] != DATASET_MAGIC:
        raise ModelFileError(f"{path}: bad magic at offset 0")
    if len(data) < 4 + _HEADER.size:
        raise ModelFileError(f"{path}: truncated header at offset {len(data)}")
    version, sdim, adim, count, meta_len = _HEADER.unpack_from(data, 4)
    if version != DATASET_VERSION:
        raise ModelFileError(f"{path}: unsupported version {version} at offset 4")
    if (sdim, adim) != (STATE_DIM, N_ACTIONS):
        raise ModelFileError(f"{path}: dims ({sdim}, {adim}) at offset 8 do not match ({STATE_DIM}, {N_ACTIONS})")
    off = 4 + _HEADER.size
    try:
        meta = json.loads(data[off : off + meta_len].decode())
    except ValueError as exc:
        raise ModelFileError(f"{path}: corrupt metadata at offset {off}") from exc
    off += meta_len
    width = sdim + adim
    expected = off + 8 * width * count
    if len(data) != expected:
        raise ModelFileError(f"{path}: size {len(data)} != {expected}; rows start at offset {off}")
    rows = np.frombuffer(data, dtype="<f8", count=count * width, offset=off).reshape(count, width)
    return DistillDataset(rows[:, :sdim].astype(np.float64), rows[:, sdim:].astype(np.float64), meta)
