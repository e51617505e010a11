"""End-to-end experiment: teachers, distilled students, scratch control, reports.

:func:`run_reproduction` trains one generalist teacher under domain
randomization and one specialist per benchmark scenario, distils every
student size in single-policy mode (generalist teacher) and in multi-policy
mode (aggregated specialist datasets), trains a 3x32 DQN from scratch with
the generalist's environment-step budget, evaluates all of them with the
same evaluation seeds and writes the comparison table.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import distill as dist
from . import evalkit
from .baseline import OllaPolicy
from .errors import ConfigurationError
from .linksim import RandomizationRanges
from .net import STUDENT_DIMS, DenseNet, save_net
from .rl import TrainerConfig, save_replay, train_teacher, write_log

log = logging.getLogger(__name__)

SCRATCH_STUDENT = "3x32"
MODES = ("single", "multi")


@dataclass
class ReproduceConfig:
    """Budgets for the full experiment. Defaults are the desk-scale profile."""

    seed: int = 0
    teacher_steps: int = 200_000
    specialist_steps: int = 100_000
    batch_size: int = 64
    gamma: float = 0.5
    learning_rate: float = 1e-4
    learning_starts: int = 2000
    target_update_period: int = 2000
    n_actors: int = 4
    single_samples: int = 200_000
    multi_samples_per_teacher: int = 70_000
    students: tuple = ("4x64", "4x32", "3x32")
    tau: float = dist.DEFAULT_TAU
    epochs: int = 20
    distill_lr: float = 1e-3
    eval_episodes: int = evalkit.DEFAULT_EPISODES
    pdf_steps: int = 20_000
    deterministic: bool = True

    def __post_init__(self):
        self.students = tuple(self.students)
        unknown = [s for s in self.students if s not in STUDENT_DIMS]
        if unknown:
            raise ConfigurationError(f"unknown student sizes {unknown}; choose from {sorted(STUDENT_DIMS)}")
        if SCRATCH_STUDENT not in self.students:
            raise ConfigurationError(f"the scratch control needs the {SCRATCH_STUDENT} student")
        for name in ("eval_episodes", "pdf_steps", "single_samples", "multi_samples_per_teacher"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")

    @classmethod
    def smoke(cls, seed: int = 0) -> "ReproduceConfig":
        """Seconds-scale budgets for plumbing and determinism checks."""
        return cls(
            seed=seed,
            teacher_steps=1200,
            specialist_steps=600,
            learning_starts=200,
            target_update_period=50,
            single_samples=800,
            multi_samples_per_teacher=300,
            epochs=2,
            eval_episodes=100,
            pdf_steps=200,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "ReproduceConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown reproduce config keys {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["students"] = list(self.students)
        return d

    def trainer(self, steps: int, seed: int, dims=None) -> TrainerConfig:
        kw = dict(
            total_env_steps=steps,
            seed=seed,
            gamma=self.gamma,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            learning_starts=self.learning_starts,
            target_update_period=self.target_update_period,
            n_actors=self.n_actors,
            deterministic=self.deterministic,
        )
        if dims is not None:
            kw["dims"] = tuple(dims)
        return TrainerConfig(**kw)


def benchmark_sampler(bench: evalkit.BenchmarkScenario):
    """Scenario draw for a specialist: one of the benchmark's UE configs, uniformly."""
    cfgs = bench.ue_configs()

    def fn(rng):
        return cfgs[int(rng.integers(len(cfgs)))]

    return fn


def _seeds(seed: int) -> dict:
    names = ["teacher", "scratch", "single_data", "multi_shuffle", "distill", "spec_MIMO", "spec_mMIMO", "spec_SCSU"]
    states = np.random.SeedSequence(seed).generate_state(len(names))
    return {n: int(s) for n, s in zip(names, states)}


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class ReproductionResult:
    config: ReproduceConfig
    teacher: DenseNet
    specialists: dict
    students: dict  # {(mode, size): DenseNet}
    scratch: DenseNet
    reports: dict  # {scenario: {policy: MetricsReport}}
    pdfs: dict  # {scenario: {policy: 28-vector}}
    comparisons: list
    eval_seeds: dict
    timings: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)  # name -> sha256

    def comparison(self, mode: str, student: str, scenario: str) -> evalkit.PolicyComparison:
        for row in self.comparisons:
            if (row["distillation"], row["student"], row["scenario"]) == (mode, student, scenario):
                return row["comparison"]
        raise KeyError((mode, student, scenario))

    def js(self, scenario: str, a: str, b: str) -> float:
        return evalkit.js_divergence(self.pdfs[scenario][a], self.pdfs[scenario][b])


def _policy_factories(res_nets: dict) -> dict:
    out = {"olla": lambda: OllaPolicy()}
    for name, net in res_nets.items():
        out[name] = lambda net=net, name=name: evalkit.GreedyPolicy(net, name)
    return out


def _evaluate_all(factories: dict, suite: dict, cfg: ReproduceConfig, jobs: int):
    """Every policy on every scenario, each scenario with its frozen seed."""

    def one(scen):
        bench = suite[scen]
        reps, pdfs, spent = {}, {}, {}
        for name, make in factories.items():
            t0 = time.perf_counter()
            reps[name] = evalkit.evaluate(make(), bench, cfg.eval_episodes, seed=bench.seed)
            t1 = time.perf_counter()
            pdfs[name] = evalkit.action_pdf(make(), bench, cfg.pdf_steps, seed=bench.seed + 1)
            spent[name] = (t1 - t0, time.perf_counter() - t1)
        return scen, reps, pdfs, spent

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(one, list(suite)))
    spent = {s: t for s, _, _, t in results}
    return {s: r for s, r, _, _ in results}, {s: p for s, _, p, _ in results}, spent


def run_reproduction(cfg: ReproduceConfig | None = None, out_dir=None, jobs: int = 1, svg: bool = False) -> ReproductionResult:
    """Run the whole experiment; write models, datasets and reports under ``out_dir`` if given."""
    cfg = cfg or ReproduceConfig()
    seeds = _seeds(cfg.seed)
    suite = evalkit.scenario_suite()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "models").mkdir(parents=True, exist_ok=True)
        (out / "datasets").mkdir(parents=True, exist_ok=True)
    timings: dict = {}

    def timed(key, fn, *a, **kw):
        t0 = time.perf_counter()
        value = fn(*a, **kw)
        timings[key] = timings.get(key, 0.0) + time.perf_counter() - t0
        log.info("%s done in %.1f s", key, time.perf_counter() - t0)
        return value

    teacher_run = timed("teacher_train", train_teacher, cfg.trainer(cfg.teacher_steps, seeds["teacher"]), RandomizationRanges())
    teacher = teacher_run.net
    specialists = {}
    for name, bench in suite.items():
        run = timed(
            "specialist_train",
            train_teacher,
            cfg.trainer(cfg.specialist_steps, seeds[f"spec_{name}"]),
            scenario_fn=benchmark_sampler(bench),
        )
        specialists[name] = run.net

    single_ds = timed(
        "single_dataset",
        dist.gen_dataset,
        teacher,
        RandomizationRanges(),
        cfg.single_samples,
        seeds["single_data"],
        teacher_id="generalist",
    )
    spec_sets = [
        timed(
            "multi_dataset",
            dist.gen_dataset,
            specialists[name],
            None,
            cfg.multi_samples_per_teacher,
            seeds[f"spec_{name}"] + 1,
            scenario_fn=benchmark_sampler(bench),
            teacher_id=f"specialist_{name}",
            scenario_tags=(name,),
        )
        for name, bench in suite.items()
    ]
    multi_ds = dist.aggregate_shuffle(spec_sets, seeds["multi_shuffle"])

    students = {}
    for mode, ds in (("single", single_ds), ("multi", multi_ds)):
        for i, size in enumerate(cfg.students):
            students[(mode, size)] = timed(
                f"distill_{mode}_{size}",
                dist.distill,
                ds,
                STUDENT_DIMS[size],
                cfg.tau,
                cfg.epochs,
                cfg.distill_lr,
                seeds["distill"] + i,
            )

    scratch_run = timed(
        "scratch_train",
        train_teacher,
        cfg.trainer(cfg.teacher_steps, seeds["scratch"], STUDENT_DIMS[SCRATCH_STUDENT]),
        RandomizationRanges(),
    )
    scratch = scratch_run.net

    nets = {"teacher": teacher, "scratch": scratch}
    nets.update({f"specialist_{n}": net for n, net in specialists.items()})
    nets.update({f"{mode}_{size}": net for (mode, size), net in students.items()})
    reports, pdfs, spent = _evaluate_all(_policy_factories(nets), suite, cfg, jobs)
    # per policy, summed over scenarios: (evaluate seconds, action-pdf seconds)
    timings["evaluate_by_policy"] = {
        name: sum(spent[s][name][0] for s in spent) for name in nets.keys() | {"olla"}
    }
    timings["action_pdf_by_policy"] = {
        name: sum(spent[s][name][1] for s in spent) for name in nets.keys() | {"olla"}
    }
    timings["evaluate"] = sum(timings["evaluate_by_policy"].values())
    timings["action_pdf"] = sum(timings["action_pdf_by_policy"].values())

    comparisons = []
    for mode in MODES:
        for size in cfg.students:
            for scen in suite:
                ref = "teacher" if mode == "single" else f"specialist_{scen}"
                comparisons.append(
                    {
                        "distillation": mode,
                        "student": size,
                        "scenario": scen,
                        "reference": ref,
                        "comparison": evalkit.relative_gain(reports[scen][f"{mode}_{size}"], reports[scen][ref]),
                    }
                )
    for scen in suite:
        comparisons.append(
            {
                "distillation": "scratch",
                "student": SCRATCH_STUDENT,
                "scenario": scen,
                "reference": "teacher",
                "comparison": evalkit.relative_gain(reports[scen]["scratch"], reports[scen]["teacher"]),
                "flag": "scratch_control",
            }
        )

    eval_seeds = {scen: {"evaluate": b.seed, "action_pdf": b.seed + 1} for scen, b in suite.items()}
    result = ReproductionResult(
        cfg, teacher, specialists, students, scratch, reports, pdfs, comparisons, eval_seeds, timings
    )
    if out is not None:
        _write_artifacts(result, out, teacher_run, single_ds, multi_ds, svg)
    return result


def _write_artifacts(result: ReproductionResult, out: Path, teacher_run, single_ds, multi_ds, svg: bool) -> None:
    files = {}
    save_net(result.teacher, out / "models" / "teacher.ladn")
    files["models/teacher.ladn"] = out / "models" / "teacher.ladn"
    save_net(result.scratch, out / "models" / "scratch_3x32.ladn")
    files["models/scratch_3x32.ladn"] = out / "models" / "scratch_3x32.ladn"
    for name, net in result.specialists.items():
        p = out / "models" / f"specialist_{name}.ladn"
        save_net(net, p)
        files[f"models/{p.name}"] = p
    for (mode, size), net in result.students.items():
        p = out / "models" / f"student_{mode}_{size}.ladn"
        save_net(net, p)
        files[f"models/{p.name}"] = p
    for name, ds in (("single", single_ds), ("multi", multi_ds)):
        p = out / "datasets" / f"{name}.ladd"
        dist.save_dataset(ds, p)
        files[f"datasets/{p.name}"] = p
    save_replay(teacher_run.replay, out / "teacher_replay.ladr")
    files["teacher_replay.ladr"] = out / "teacher_replay.ladr"
    write_log(teacher_run.log, out / "teacher_log.csv")

    result.artifacts = {k: sha256_file(v) for k, v in sorted(files.items())}
    manifest = {
        "command": "reproduce-paper",
        "seed": result.config.seed,
        "config": result.config.to_dict(),
        "scenarios": {n: b.to_dict() for n, b in evalkit.scenario_suite().items()},
        "eval_seeds": result.eval_seeds,
        "comparison_references": {
            f"{r['distillation']}/{r['student']}/{r['scenario']}": r["reference"] for r in result.comparisons
        },
        "js_divergence_vs_reference": {
            scen: {
                name: evalkit.js_divergence(p, result.pdfs[scen][_reference(name, scen)])
                for name, p in by_policy.items()
                if name != "olla"
            }
            for scen, by_policy in result.pdfs.items()
        },
        "artifacts": result.artifacts,
        "timings_s": result.timings,
    }
    evalkit.report_write(result.reports, result.comparisons, out, manifest=manifest, svg=svg)
    js_path = out / "pdf_summary.json"
    js_path.write_text(json.dumps({s: {n: list(map(float, p)) for n, p in d.items()} for s, d in result.pdfs.items()}, indent=1))


def _reference(name: str, scen: str) -> str:
    return f"specialist_{scen}" if name.startswith("multi_") else "teacher"
