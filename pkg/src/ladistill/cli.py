"""Command-line front end: ``python -m ladistill <command> ...``.

Every command accepts ``--config``, ``--seed``, ``--deterministic``,
``--jobs`` and ``--out`` and writes a ``manifest.json`` next to its
artifacts. ``--init-config`` prints the full default JSON config for a
command and exits.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import distill as dist
from . import evalkit
from .baseline import OllaPolicy
from .env import LinkAdaptationEnv, run_episode, write_trace
from .errors import ConfigurationError, ModelFileError, TrainingError
from .linksim import RandomizationRanges
from .net import STUDENT_DIMS, load_net, save_net
from .pipeline import ReproduceConfig, run_reproduction, sha256_file
from .rl import TrainerConfig, load_replay, save_replay, train_teacher, write_log

log = logging.getLogger("ladistill")


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# configs


def _trainer_defaults() -> dict:
    cfg = TrainerConfig(total_env_steps=200_000, batch_size=64)
    return {"trainer": cfg.to_dict(), "ranges": RandomizationRanges().to_dict()}


DEFAULTS = {
    "train-teacher": _trainer_defaults,
    "gen-distill-data": lambda: {"mode": "fresh", "n_samples": 200_000, "episodes_per_scenario": 50, "n_envs": 16, "ranges": RandomizationRanges().to_dict()},
    "distill": lambda: {"student": "3x32", "tau": dist.DEFAULT_TAU, "epochs": 20, "learning_rate": 1e-3, "batch_size": dist.DEFAULT_BATCH},
    "evaluate": lambda: {"scenarios": list(evalkit.scenario_suite()), "n_episodes": evalkit.DEFAULT_EPISODES, "pdf_steps": 20_000, "alpha": 0.5},
    "reproduce-paper": lambda: ReproduceConfig().to_dict(),
}


def load_config(command: str, path) -> dict:
    """Command defaults overlaid with the JSON file at ``path`` (if any)."""
    cfg = DEFAULTS[command]()
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    try:
        user = json.loads(p.read_text())
    except ValueError as exc:
        raise CliError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise CliError(f"config file {p} must hold a JSON object")
    unknown = set(user) - set(cfg)
    if unknown:
        raise CliError(f"config file {p}: unknown keys {sorted(unknown)}")
    for k, v in user.items():
        if isinstance(cfg[k], dict) and isinstance(v, dict):
            cfg[k] = {**cfg[k], **v}
        else:
            cfg[k] = v
    return cfg


def _trainer_config(d: dict, seed, deterministic) -> TrainerConfig:
    known = {f.name for f in fields(TrainerConfig)}
    extra = set(d) - known
    if extra:
        raise ConfigurationError(f"unknown trainer keys {sorted(extra)}")
    d = dict(d)
    if seed is not None:
        d["seed"] = seed
    if deterministic:
        d["deterministic"] = True
    return TrainerConfig(**d)


def _write_manifest(out: Path, command: str, seed, config: dict, artifacts: dict, extra: dict | None = None) -> None:
    man = {
        "command": command,
        "seed": seed,
        "config": config,
        "artifacts": {name: sha256_file(p) for name, p in sorted(artifacts.items())},
    }
    man.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True, default=evalkit._json_default))


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands


def cmd_train_teacher(args, cfg: dict) -> int:
    tcfg = _trainer_config(cfg["trainer"], args.seed, args.deterministic)
    ranges = RandomizationRanges.from_dict(cfg["ranges"])
    out = _out_dir(args, "teacher_run")
    init = load_net(args.init, tcfg.dims) if args.init else None
    res = train_teacher(tcfg, ranges, init=init, checkpoint_dir=out / "checkpoints" if args.checkpoints else None)
    save_net(res.net, out / "teacher.ladn")
    save_replay(res.replay, out / "replay.ladr")
    write_log(res.log, out / "train_log.csv")
    _write_manifest(
        out,
        "train-teacher",
        tcfg.seed,
        {"trainer": tcfg.to_dict(), "ranges": ranges.to_dict()},
        {"teacher.ladn": out / "teacher.ladn", "replay.ladr": out / "replay.ladr"},
        {"env_steps": res.env_steps, "grad_steps": res.grad_steps},
    )
    print(f"teacher: {res.env_steps} env steps, {res.grad_steps} gradient steps -> {out / 'teacher.ladn'}")
    return 0


def cmd_gen_distill_data(args, cfg: dict) -> int:
    if not args.teacher:
        raise CliError("--teacher is required")
    teacher = load_net(args.teacher)
    mode = args.mode or cfg["mode"]
    seed = args.seed if args.seed is not None else 0
    if mode == "replay":
        if not args.replay:
            raise CliError("--replay is required in replay mode")
        ds = dist.from_replay(teacher, load_replay(args.replay), teacher_id=Path(args.teacher).stem)
    elif mode == "fresh":
        n = args.n if args.n is not None else cfg["n_samples"]
        ds = dist.gen_dataset(
            teacher,
            RandomizationRanges.from_dict(cfg["ranges"]),
            n,
            seed,
            teacher_id=Path(args.teacher).stem,
            episodes_per_scenario=cfg["episodes_per_scenario"],
            n_envs=cfg["n_envs"],
        )
    else:
        raise CliError(f"unknown mode {mode!r}; use fresh or replay")
    path = Path(args.out or "dataset.ladd")
    path.parent.mkdir(parents=True, exist_ok=True)
    dist.save_dataset(ds, path)
    print(f"dataset: {ds.count} samples ({mode}) -> {path} sha256={sha256_file(path)}")
    return 0


def cmd_distill(args, cfg: dict) -> int:
    if not args.datasets:
        raise CliError("at least one dataset path is required")
    sets = [dist.load_dataset(p) for p in args.datasets]
    seed = args.seed if args.seed is not None else 0
    ds = sets[0] if len(sets) == 1 else dist.aggregate_shuffle(sets, seed)
    size = args.student or cfg["student"]
    if size not in STUDENT_DIMS:
        raise CliError(f"unknown student {size!r}; choose from {sorted(STUDENT_DIMS)}")
    mode = "single-policy" if len(sets) == 1 else "multi-policy"
    print(f"distilling {size} student ({mode}) on {ds.count} samples from {len(sets)} dataset(s)")
    history: list = []
    student = dist.distill(
        ds,
        STUDENT_DIMS[size],
        tau=args.tau if args.tau is not None else cfg["tau"],
        epochs=args.epochs if args.epochs is not None else cfg["epochs"],
        lr=cfg["learning_rate"],
        seed=seed,
        batch_size=cfg["batch_size"],
        history=history,
    )
    path = Path(args.out or f"student_{size}.ladn")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_net(student, path)
    for row in history:
        print(f"epoch {row['epoch']}: train_kl={row['train_kl']:.5f} val_kl={row['val_kl']:.5f} agreement={row['val_agreement']:.4f}")
    print(f"student -> {path} sha256={sha256_file(path)}")
    return 0


def _parse_policy(spec: str):
    """``olla``, ``fixed:<m>``, ``<path>`` or ``<name>=<path>``."""
    if spec == "olla":
        return "olla", OllaPolicy
    if spec.startswith("fixed:"):
        m = int(spec.split(":", 1)[1])
        return f"fixed{m}", lambda: evalkit.FixedPolicy(m)
    name, _, path = spec.rpartition("=")
    net = load_net(path)
    name = name or Path(path).stem
    return name, lambda: evalkit.GreedyPolicy(net, name)


def cmd_evaluate(args, cfg: dict) -> int:
    if not args.policy:
        raise CliError("give at least one --policy")
    policies = dict(_parse_policy(p) for p in args.policy)
    suite = evalkit.scenario_suite()
    names = args.scenarios or cfg["scenarios"]
    unknown = [n for n in names if n not in suite]
    if unknown:
        raise CliError(f"unknown scenarios {unknown}; choose from {sorted(suite)}")
    ref = args.reference or next(iter(policies))
    if ref not in policies:
        raise CliError(f"reference policy {ref!r} not among {sorted(policies)}")
    out = _out_dir(args, "eval_out")
    seed_offset = args.seed if args.seed is not None else 0
    reports, comparisons, seeds = {}, [], {}
    for scen in names:
        bench = suite[scen]
        seed = bench.seed + seed_offset
        seeds[scen] = seed
        reports[scen] = {
            name: evalkit.evaluate(make(), bench, cfg["n_episodes"], seed=seed, alpha=cfg["alpha"])
            for name, make in policies.items()
        }
        for name in policies:
            comparisons.append(
                {
                    "distillation": "evaluate",
                    "student": name,
                    "scenario": scen,
                    "comparison": evalkit.relative_gain(reports[scen][name], reports[scen][ref]),
                }
            )
        if args.dump_scenario:
            (out / f"scenario_{scen}.json").write_text(json.dumps(bench.to_dict(), indent=2))
        if args.trace:
            for name, make in policies.items():
                policy = make()
                env = LinkAdaptationEnv(bench.ue_configs()[0], seed)
                write_trace([run_episode(env, policy) for _ in range(args.trace)], out / f"trace_{scen}_{name}.csv")
    manifest = {
        "command": "evaluate",
        "seed": args.seed,
        "config": cfg,
        "policies": args.policy,
        "reference": ref,
        "eval_seeds": seeds,
    }
    evalkit.report_write(reports, comparisons, out, manifest=manifest, svg=args.svg)
    for scen, reps in reports.items():
        for name, rep in reps.items():
            s = rep.summary()
            print(f"{scen:6s} {name:20s} T={s['T']:.4f} BLER={s['BLER']:.4f} r={s['r']:.4f}")
    print(f"reports -> {out}")
    return 0


def cmd_reproduce_paper(args, cfg: dict) -> int:
    if args.smoke:
        rcfg = ReproduceConfig.smoke()
    else:
        rcfg = ReproduceConfig.from_dict(cfg)
    if args.seed is not None:
        rcfg.seed = args.seed
    if args.deterministic:
        rcfg.deterministic = True
    out = _out_dir(args, "reproduction")
    res = run_reproduction(rcfg, out_dir=out, jobs=args.jobs, svg=args.svg)
    for row in res.comparisons:
        c = row["comparison"]
        flag = f"  [{row['flag']}]" if row.get("flag") else ""
        print(
            f"{row['distillation']:8s} {row['student']:5s} {row['scenario']:6s} "
            f"dT={c.delta_t:+7.2f}% dBLER={c.delta_bler:+7.2f}% dr={c.delta_r:+7.2f}%{flag}"
        )
    print(f"table -> {out / 'table2.csv'}")
    return 0


COMMANDS = {
    "train-teacher": cmd_train_teacher,
    "gen-distill-data": cmd_gen_distill_data,
    "distill": cmd_distill,
    "evaluate": cmd_evaluate,
    "reproduce-paper": cmd_reproduce_paper,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config; missing keys take defaults")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--deterministic", action="store_true", help="single-threaded bit-reproducible mode")
    common.add_argument("--jobs", type=int, default=1, help="worker cap")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--init-config", action="store_true", help="print the default config and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ladistill", description="DQN link adaptation with policy distillation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", parents=[common], help="train a DQN teacher")
    p.add_argument("--init", help="starting model file")
    p.add_argument("--checkpoints", action="store_true", help="write periodic checkpoints")

    p = sub.add_parser("gen-distill-data", parents=[common], help="build a distillation dataset")
    p.add_argument("--teacher", help="teacher model file")
    p.add_argument("--mode", choices=["fresh", "replay"])
    p.add_argument("--n", type=int, help="number of samples (fresh mode)")
    p.add_argument("--replay", help="replay dump from train-teacher (replay mode)")

    p = sub.add_parser("distill", parents=[common], help="distil a student from one or more datasets")
    p.add_argument("datasets", nargs="*")
    p.add_argument("--student", choices=sorted(STUDENT_DIMS))
    p.add_argument("--tau", type=float)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="evaluate policies on the benchmark scenarios")
    p.add_argument("--policy", action="append", help="olla, fixed:<m>, <model path> or <name>=<model path>")
    p.add_argument("--reference", help="policy name the relative gains are computed against")
    p.add_argument("--scenarios", nargs="+")
    p.add_argument("--svg", action="store_true", help="also write SVG charts")
    p.add_argument("--trace", type=int, default=0, metavar="N", help="write a per-transmission trace of N episodes")
    p.add_argument("--dump-scenario", action="store_true", help="write each scenario as JSON")

    p = sub.add_parser("reproduce-paper", parents=[common], help="run the full experiment")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--smoke", action="store_true", help="tiny budgets for a quick end-to-end check")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.init_config:
        text = json.dumps(DEFAULTS[args.command](), indent=2, default=evalkit._json_default)
        if args.out:
            Path(args.out).write_text(text + "\n")
        else:
            print(text)
        return 0
    try:
        cfg = load_config(args.command, args.config)
        return COMMANDS[args.command](args, cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigurationError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
