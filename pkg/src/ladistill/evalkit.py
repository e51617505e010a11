"""Benchmark scenarios, policy evaluation, relative gains and report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mcs
from .env import N_ACTIONS, LinkAdaptationEnv, RewardConfig
from .linksim import ScenarioConfig, make_scenario
from .net import DenseNet

DEFAULT_EPISODES = 5000
METRICS = ("delta_t", "delta_bler", "delta_r")


# --------------------------------------------------------------------------
# policies


class GreedyPolicy:
    """Argmax of a Q-network."""

    def __init__(self, net: DenseNet, name: str = "net"):
        self.net = net
        self.name = name

    def __call__(self, s) -> int:
        return int(np.argmax(self.net.forward(s)))


class FixedPolicy:
    def __init__(self, m: int):
        mcs._check_index(m)
        self.m = int(m)
        self.name = f"fixed{m}"

    def __call__(self, s) -> int:
        return self.m


# --------------------------------------------------------------------------
# benchmark scenarios


@dataclass(frozen=True)
class BenchmarkScenario:
    """A fixed evaluation scenario: one base config and per-UE geometry offsets."""

    name: str
    config: ScenarioConfig
    ue_offsets_db: tuple = (0.0,)
    seed: int = 0

    def ue_configs(self) -> list[ScenarioConfig]:
        return [self.config.with_sinr_offset(o) for o in self.ue_offsets_db]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config": json.loads(self.config.to_json()),
            "ue_offsets_db": list(self.ue_offsets_db),
            "seed": self.seed,
        }


# evaluation seeds live far above the 31-bit range used for training draws
_EVAL_SEED_BASE = 7_000_000_000
_UE_SPREAD_DB = tuple(float(x) for x in np.linspace(-9.0, 9.0, 10))


def scenario_suite() -> dict[str, BenchmarkScenario]:
    """The three benchmark scenarios (single-cell single-user, MIMO, mMIMO)."""
    scsu = make_scenario(
        antenna_array="MIMO4",
        cell_radius_m=400.0,
        bandwidth_mhz=40.0,
        n_subbands=106,
        dl_tx_power_w=40.0,
        n_fb_ues=1,
        n_mbb_ues=0,
        fb_speed_mps=3.0,
        indoor=False,
        seed=_EVAL_SEED_BASE + 1,
    )
    mimo = make_scenario(
        antenna_array="MIMO4",
        cell_radius_m=500.0,
        bandwidth_mhz=100.0,
        n_subbands=273,
        dl_tx_power_w=80.0,
        n_fb_ues=10,
        n_mbb_ues=0,
        fb_speed_mps=5.0,
        indoor=False,
        seed=_EVAL_SEED_BASE + 2,
    )
    mmimo = make_scenario(
        antenna_array="mMIMO64",
        cell_radius_m=750.0,
        bandwidth_mhz=100.0,
        n_subbands=273,
        dl_tx_power_w=80.0,
        n_fb_ues=10,
        n_mbb_ues=0,
        fb_speed_mps=5.0,
        indoor=False,
        seed=_EVAL_SEED_BASE + 3,
    )
    return {
        "MIMO": BenchmarkScenario("MIMO", mimo, _UE_SPREAD_DB, _EVAL_SEED_BASE + 20),
        "mMIMO": BenchmarkScenario("mMIMO", mmimo, _UE_SPREAD_DB, _EVAL_SEED_BASE + 30),
        "SCSU": BenchmarkScenario("SCSU", scsu, (0.0,), _EVAL_SEED_BASE + 10),
    }


def _as_benchmark(scenario) -> BenchmarkScenario:
    if isinstance(scenario, BenchmarkScenario):
        return scenario
    if isinstance(scenario, ScenarioConfig):
        return BenchmarkScenario("custom", scenario, (0.0,), scenario.seed)
    raise TypeError(f"unsupported scenario type {type(scenario).__name__}")


# --------------------------------------------------------------------------
# evaluation


@dataclass
class MetricsReport:
    mean_ue_throughput: float
    bler: float
    mean_episodic_reward: float
    n_episodes: int
    throughput_samples: np.ndarray = field(repr=False)
    action_counts: np.ndarray = field(repr=False)
    n_transmissions: int = 0
    n_failures: int = 0

    def summary(self) -> dict:
        return {
            "T": self.mean_ue_throughput,
            "BLER": self.bler,
            "r": self.mean_episodic_reward,
            "n_episodes": self.n_episodes,
        }


def _split(n: int, k: int) -> list[int]:
    base, extra = divmod(n, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def _ue_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def evaluate(policy, scenario, n_episodes: int = DEFAULT_EPISODES, seed: int | None = None, alpha: float = 0.5) -> MetricsReport:
    """Run ``n_episodes`` packets of ``policy`` spread evenly over the scenario's UEs.

    Throughput per packet is the delivered SE divided by the TTIs the packet
    occupied (0 for drops). BLER counts every transmission attempt.
    """
    bench = _as_benchmark(scenario)
    seed = bench.seed if seed is None else seed
    cfgs = bench.ue_configs()
    tput = np.zeros(n_episodes)
    counts = np.zeros(N_ACTIONS, dtype=np.int64)
    total_reward = 0.0
    n_tx = n_fail = 0
    observe = getattr(policy, "observe", None)
    reset = getattr(policy, "reset", None)
    k = 0
    for cfg, n_ue, ue_seed in zip(cfgs, _split(n_episodes, len(cfgs)), _ue_seeds(seed, len(cfgs))):
        if reset is not None:
            reset()
        env = LinkAdaptationEnv(cfg, ue_seed, RewardConfig(alpha, cfg.max_dl_tx))
        for _ in range(n_ue):
            s = env.reset()
            while True:
                a = int(policy(s))
                s, r, info = env.step(a)
                if observe is not None:
                    observe(a, info["success"], info["attempt"])
                counts[a] += 1
                n_tx += 1
                total_reward += r
                if not info["success"]:
                    n_fail += 1
                if s is None:
                    if info["success"]:
                        tput[k] = mcs.SPECTRAL_EFFICIENCY[a] / (info["attempt"] + 1)
                    break
            k += 1
    return MetricsReport(
        mean_ue_throughput=float(tput.mean()) if n_episodes else float("nan"),
        bler=n_fail / n_tx if n_tx else float("nan"),
        mean_episodic_reward=total_reward / n_episodes if n_episodes else float("nan"),
        n_episodes=n_episodes,
        throughput_samples=tput,
        action_counts=counts,
        n_transmissions=n_tx,
        n_failures=n_fail,
    )


@dataclass(frozen=True)
class PolicyComparison:
    """Relative differences in percent; NaN marks an undefined (zero) denominator."""

    delta_t: float
    delta_bler: float
    delta_r: float

    @property
    def undefined(self) -> tuple[str, ...]:
        return tuple(k for k in METRICS if math.isnan(getattr(self, k)))


def _rel(new: float, ref: float) -> float:
    if ref == 0.0 or not math.isfinite(ref):
        return float("nan")
    return 100.0 * (new - ref) / abs(ref)


def relative_gain(student: MetricsReport, teacher: MetricsReport) -> PolicyComparison:
    """Percent change of the student's throughput, BLER and reward relative to the teacher."""
    return PolicyComparison(
        _rel(student.mean_ue_throughput, teacher.mean_ue_throughput),
        _rel(student.bler, teacher.bler),
        _rel(student.mean_episodic_reward, teacher.mean_episodic_reward),
    )


def action_pdf(policy, scenario, n_steps: int, seed: int | None = None) -> np.ndarray:
    """Normalized histogram of the MCS indices chosen over ``n_steps`` transmissions."""
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    bench = _as_benchmark(scenario)
    seed = bench.seed if seed is None else seed
    cfgs = bench.ue_configs()
    counts = np.zeros(N_ACTIONS, dtype=np.int64)
    observe = getattr(policy, "observe", None)
    reset = getattr(policy, "reset", None)
    for cfg, n_ue, ue_seed in zip(cfgs, _split(n_steps, len(cfgs)), _ue_seeds(seed, len(cfgs))):
        if reset is not None:
            reset()
        env = LinkAdaptationEnv(cfg, ue_seed)
        s = env.reset()
        for _ in range(n_ue):
            a = int(policy(s))
            counts[a] += 1
            s, _, info = env.step(a)
            if observe is not None:
                observe(a, info["success"], info["attempt"])
            if s is None:
                s = env.reset()
    return counts / counts.sum()


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in nats (0 for equal inputs, ln 2 for disjoint supports)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / m[nz])))

    return max(0.5 * kl(p) + 0.5 * kl(q), 0.0)


def throughput_cdf(report_or_samples) -> list[tuple[float, float]]:
    """Empirical CDF points ``(value, fraction <= value)`` of per-packet throughput."""
    x = getattr(report_or_samples, "throughput_samples", report_or_samples)
    x = np.sort(np.asarray(x, dtype=float))
    if x.size == 0:
        raise ValueError("need at least one sample")
    vals, last = np.unique(x, return_index=False, return_counts=True)
    cum = np.cumsum(last) / x.size
    return list(zip(vals.tolist(), cum.tolist()))


# --------------------------------------------------------------------------
# report files

TABLE2_FIELDS = ("distillation", "student", "scenario", "delta_t", "delta_bler", "delta_r", "flag")


def report_write(reports: dict, comparisons: list[dict], out_dir, manifest: dict | None = None, svg: bool = False) -> dict:
    """Write ``table2.csv``, per-scenario CDF/PDF CSVs and ``manifest.json``.

    Parameters
    ----------
    reports : dict
        ``{scenario: {policy_name: MetricsReport}}``.
    comparisons : list of dict
        Rows with keys ``distillation, student, scenario`` and a
        ``comparison`` (:class:`PolicyComparison`); optional ``flag``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    table = out / "table2.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE2_FIELDS)
        for row in comparisons:
            c = row["comparison"]
            w.writerow(
                [row["distillation"], row["student"], row["scenario"]]
                + [repr(float(getattr(c, k))) for k in METRICS]
                + [row.get("flag") or ("undefined:" + "+".join(c.undefined) if c.undefined else "")]
            )
    paths["table2"] = table
    for scen, by_policy in reports.items():
        names = list(by_policy)
        cdf_path = out / f"cdf_{scen}.csv"
        with open(cdf_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "throughput", "cdf"])
            for name in names:
                for v, c in throughput_cdf(by_policy[name]):
                    w.writerow([name, repr(v), repr(c)])
        pdf_path = out / f"pdf_{scen}.csv"
        with open(pdf_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mcs"] + names)
            pdfs = [by_policy[n].action_counts / max(by_policy[n].action_counts.sum(), 1) for n in names]
            for m in range(N_ACTIONS):
                w.writerow([m] + [repr(float(p[m])) for p in pdfs])
        paths[f"cdf_{scen}"] = cdf_path
        paths[f"pdf_{scen}"] = pdf_path
        if svg:
            from .svg import cdf_chart, pdf_chart

            (out / f"cdf_{scen}.svg").write_text(
                cdf_chart({n: throughput_cdf(by_policy[n]) for n in names}, title=f"{scen} throughput CDF")
            )
            (out / f"pdf_{scen}.svg").write_text(
                pdf_chart({n: p for n, p in zip(names, pdfs)}, title=f"{scen} MCS PDF")
            )
    summary = {
        scen: {name: rep.summary() for name, rep in by_policy.items()} for scen, by_policy in reports.items()
    }
    man = dict(manifest or {})
    man["metrics"] = summary
    man_path = out / "manifest.json"
    man_path.write_text(json.dumps(man, indent=2, sort_keys=True, default=_json_default))
    paths["manifest"] = man_path
    return paths


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def read_table2(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for k in METRICS:
                row[k] = float(row[k])
            rows.append(row)
    return rows
