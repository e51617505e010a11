"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 5-9 share one desk-scale run of the full pipeline (about 10-15
minutes on one core); criteria 1-4 and 10 are fast unit-level checks.
"""

import math
import time

import numpy as np
import pytest

from ladistill import mcs
from ladistill.distill import gen_dataset, load_dataset, save_dataset
from ladistill.env import N_ACTIONS
from ladistill.linksim import LinkState, RandomizationRanges, make_scenario, start_packet, step_fading, transmit
from ladistill.net import STUDENT_DIMS, TEACHER_DIMS, init_net, kl_batch_loss, kl_loss, load_net, save_net
from ladistill.pipeline import ReproduceConfig, run_reproduction
from ladistill.rl import td_loss_fn

from oracles import MCS_GOLDEN, central_difference, kl_scalar

SCENARIOS = ("MIMO", "mMIMO", "SCSU")


@pytest.fixture(scope="module")
def reproduction(tmp_path_factory):
    out = tmp_path_factory.mktemp("reproduction")
    t0 = time.perf_counter()
    res = run_reproduction(ReproduceConfig(), out_dir=out)
    res.timings["total"] = time.perf_counter() - t0
    return res, out


# ---------------------------------------------------------------- 1


def test_c01_kl_loss_oracle(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        qt, qs = rng.normal(size=N_ACTIONS) * 3, rng.normal(size=N_ACTIONS) * 3
        tau = float(rng.choice([0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 10.0]))
        loss, _ = kl_loss(qt, qs, tau)
        worst = max(worst, abs(float(loss) - kl_scalar(qt.tolist(), qs.tolist(), tau)))
    worked, _ = kl_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0]), 1.0)
    worked_ref = kl_scalar([1.0, 0.0], [0.0, 0.0], 1.0)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and abs(float(worked) - worked_ref) <= 1e-9 and abs(float(worked) - 0.1109) < 1e-4 and elapsed < 1.0
    assert criterion(1, "KL loss oracle", ok, f"max |err|={worst:.2e}, 2-action loss={float(worked):.5f}, {elapsed:.3f}s")


# ---------------------------------------------------------------- 2


def _max_rel_grad_err(net, x, loss_fn):
    q, acts = net.forward_cache(x)
    gw, gb = net.backward(acts, loss_fn(q)[1])
    num = central_difference(lambda: loss_fn(net.forward(x))[0], [*net.weights, *net.biases])
    return max(
        float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-8))) for a, n in zip([*gw, *gb], num)
    )


def test_c02_gradient_fidelity(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    net = init_net([16, 8, 28], 11)
    for b in net.biases:
        b[:] = rng.normal(size=b.shape) * 0.1
    x = rng.normal(size=(8, 16))
    td = _max_rel_grad_err(net, x, td_loss_fn(rng.integers(0, 28, size=8), rng.normal(size=8) * 2))
    kl = _max_rel_grad_err(net, x, kl_batch_loss(rng.normal(size=(8, 28)) * 2, 0.5))
    elapsed = time.perf_counter() - t0
    ok = td < 1e-4 and kl < 1e-4 and elapsed < 10.0
    assert criterion(2, "gradient fidelity", ok, f"max rel err TD={td:.2e}, KL={kl:.2e}, {elapsed:.2f}s")


# ---------------------------------------------------------------- 3


def test_c03_mcs_table_golden(criterion):
    t0 = time.perf_counter()
    table = mcs.mcs_table()
    got = [(e.modulation_order, e.rate_x1024, e.spectral_efficiency) for e in table]
    se = [e.spectral_efficiency for e in table]
    monotone = all(b > a for a, b in zip(se, se[1:]))
    elapsed = time.perf_counter() - t0
    ok = got == [tuple(r) for r in MCS_GOLDEN] and monotone and elapsed < 1.0
    assert criterion(3, "MCS table golden test", ok, f"{sum(g == tuple(r) for g, r in zip(got, MCS_GOLDEN))}/28 rows match, strictly increasing SE={monotone}")


# ---------------------------------------------------------------- 4


def _bler_at_threshold(m, n, seed):
    cfg = make_scenario(mean_sinr_db=mcs.required_sinr_db(m), fading_sigma_db=0.0, max_dl_tx=1)
    link, rng = LinkState(), np.random.default_rng(seed)
    fails = 0
    for _ in range(n):
        start_packet(link)
        fails += not transmit(link, m, cfg, rng).success
    return fails / n


def test_c04_simulator_calibration(criterion):
    t0 = time.perf_counter()
    ms = sorted(np.random.default_rng(7).choice(mcs.N_MCS, size=5, replace=False).tolist())
    blers = {m: _bler_at_threshold(m, 100_000, seed=m) for m in ms}

    cfg = make_scenario(mean_sinr_db=4.0, fading_sigma_db=0.0, bler_override=1.0)
    link, rng = LinkState(), np.random.default_rng(0)
    start_packet(link)
    gain = transmit(link, 0, cfg, rng).effective_sinr_db
    gain = transmit(link, 0, cfg, rng).effective_sinr_db - gain

    ratios = []
    for rho, sigma in ((0.0, 6.0), (0.7, 4.0), (0.95, 6.0)):
        cfg = make_scenario(fading_rho=rho, fading_sigma_db=sigma)
        link, rng = LinkState(), np.random.default_rng(3)
        link.current_fading_db = sigma * rng.standard_normal()
        x = np.array([step_fading(link, cfg, rng) for _ in range(100_000)]) - cfg.mean_sinr_db
        ratios.append(x.var() / sigma**2)
    elapsed = time.perf_counter() - t0
    ok = (
        all(abs(b - 0.5) <= 0.01 for b in blers.values())
        and abs(gain - 3.01) <= 0.01
        and all(abs(r - 1.0) <= 0.05 for r in ratios)
        and elapsed < 30.0
    )
    detail = (
        "BLER@theta " + ", ".join(f"m{m}={b:.4f}" for m, b in blers.items())
        + f"; HARQ gain={gain:.4f} dB; var ratios={[round(float(r), 3) for r in ratios]}; {elapsed:.1f}s"
    )
    assert criterion(4, "simulator calibration", ok, detail)


# ---------------------------------------------------------------- 5


def test_c05_teacher_beats_baseline(reproduction, criterion):
    res, _ = reproduction
    parts, ok = [], True
    for scen in SCENARIOS:
        t, o = res.reports[scen]["teacher"], res.reports[scen]["olla"]
        d_t = 100 * (t.mean_ue_throughput - o.mean_ue_throughput) / o.mean_ue_throughput
        better_r = t.mean_episodic_reward > o.mean_episodic_reward
        ok &= d_t >= 3.0 and better_r
        parts.append(f"{scen} dT={d_t:+.1f}% r {t.mean_episodic_reward:.3f} vs {o.mean_episodic_reward:.3f}")
    train_s = res.timings["teacher_train"]
    eval_s = res.timings["evaluate_by_policy"]["teacher"] + res.timings["evaluate_by_policy"]["olla"]
    ok &= train_s <= 15 * 60 and eval_s <= 120
    parts.append(f"train {train_s:.0f}s, eval {eval_s:.0f}s")
    assert criterion(5, "teacher beats OLLA baseline", ok, "; ".join(parts))


# ---------------------------------------------------------------- 6


def test_c06_single_policy_fidelity(reproduction, criterion):
    res, _ = reproduction
    ok, parts, tight = True, [], True
    for size in ("4x64", "4x32", "3x32"):
        for scen in SCENARIOS:
            c = res.comparison("single", size, scen)
            ok &= abs(c.delta_t) <= 3.0 and c.delta_r >= -5.0 and abs(c.delta_bler) <= 10.0
            tight &= abs(c.delta_t) <= 0.54 and c.delta_r >= -2.2
            parts.append(f"{size}/{scen} dT={c.delta_t:+.2f} dBLER={c.delta_bler:+.2f} dr={c.delta_r:+.2f}")
        spent = res.timings["single_dataset"] + res.timings[f"distill_single_{size}"]
        ok &= spent <= 600
    parts.append(f"tighter reference bounds met: {tight} (reported only)")
    assert criterion(6, "single-policy distillation fidelity", ok, "; ".join(parts))


# ---------------------------------------------------------------- 7


def test_c07_multi_policy_fidelity(reproduction, criterion):
    res, _ = reproduction
    ok, parts, tight = True, [], True
    for scen in SCENARIOS:
        c = res.comparison("multi", "3x32", scen)
        ok &= c.delta_t >= -6.0 and c.delta_r >= -6.0
        tight &= c.delta_t >= -2.8 and c.delta_r >= -3.7
        parts.append(f"{scen} vs specialist dT={c.delta_t:+.2f} dr={c.delta_r:+.2f}")
    spent = (
        res.timings["specialist_train"]
        + res.timings["multi_dataset"]
        + sum(res.timings[f"distill_multi_{s}"] for s in ("4x64", "4x32", "3x32"))
    )
    ok &= spent <= 20 * 60
    parts.append(f"tighter reference bounds met: {tight} (reported only); {spent:.0f}s")
    assert criterion(7, "multi-policy distillation fidelity", ok, "; ".join(parts))


# ---------------------------------------------------------------- 8


def test_c08_scratch_control_gap(reproduction, criterion):
    res, out = reproduction
    import json

    manifest = json.loads((out / "manifest.json").read_text())
    same_seeds = all(
        manifest["comparison_references"][f"scratch/3x32/{s}"] == "teacher" for s in SCENARIOS
    ) and manifest["eval_seeds"] == {s: res.eval_seeds[s] for s in res.eval_seeds}
    wins, parts = 0, []
    for scen in SCENARIOS:
        scratch = res.reports[scen]["scratch"].mean_ue_throughput
        student = res.reports[scen]["single_3x32"].mean_ue_throughput
        wins += scratch < student
        parts.append(f"{scen} scratch T={scratch:.4f} vs distilled {student:.4f} ({100 * (scratch - student) / student:+.2f}%)")
    spent = res.timings["scratch_train"]
    ok = wins >= 2 and same_seeds and spent <= 15 * 60
    parts.append(f"lower on {wins}/3, shared eval seeds={same_seeds}, {spent:.0f}s")
    assert criterion(8, "scratch-control gap", ok, "; ".join(parts))


# ---------------------------------------------------------------- 9


def test_c09_action_distribution_transfer(reproduction, criterion):
    res, _ = reproduction
    ok, parts = True, []
    for scen in SCENARIOS:
        js = {}
        for mode in ("single", "multi"):
            ref = "teacher" if mode == "single" else f"specialist_{scen}"
            for size in ("4x64", "4x32", "3x32"):
                js[f"{mode}_{size}"] = res.js(scen, ref, f"{mode}_{size}")
        scratch_js = res.js(scen, "teacher", "scratch")
        # multi-policy students learn from the specialist of each scenario; the
        # shared teacher's distance is printed for information only
        info = max(res.js(scen, "teacher", f"multi_{size}") for size in ("4x64", "4x32", "3x32"))
        ok &= max(js.values()) <= 0.05 and scratch_js > max(js.values())
        parts.append(
            f"{scen} JS " + " ".join(f"{k}={v:.4f}" for k, v in js.items()) + f" scratch={scratch_js:.4f} (multi vs teacher max {info:.4f})"
        )
    names = ["teacher", "scratch"] + [f"{m}_{s}" for m in ("single", "multi") for s in ("4x64", "4x32", "3x32")]
    names += [f"specialist_{s}" for s in SCENARIOS]
    spent = sum(res.timings["action_pdf_by_policy"][n] for n in names)
    ok &= spent <= 120
    parts.append(f"{spent:.0f}s")
    assert criterion(9, "action-distribution transfer", ok, "; ".join(parts))


# ---------------------------------------------------------------- 10


def test_c10_determinism_and_round_trips(tmp_path, criterion):
    t0 = time.perf_counter()
    a = run_reproduction(ReproduceConfig.smoke(seed=5), out_dir=tmp_path / "a")
    b = run_reproduction(ReproduceConfig.smoke(seed=5), out_dir=tmp_path / "b")
    same = a.artifacts == b.artifacts and len(a.artifacts) > 0
    same_table = (tmp_path / "a" / "table2.csv").read_bytes() == (tmp_path / "b" / "table2.csv").read_bytes()

    net = init_net(TEACHER_DIMS, 1)
    save_net(net, tmp_path / "m1.ladn")
    save_net(load_net(tmp_path / "m1.ladn"), tmp_path / "m2.ladn")
    model_rt = (tmp_path / "m1.ladn").read_bytes() == (tmp_path / "m2.ladn").read_bytes()
    model_rt &= load_net(tmp_path / "m1.ladn").param_hash() == net.param_hash()

    ds = gen_dataset(init_net(STUDENT_DIMS["3x32"], 2), RandomizationRanges(), 500, seed=3)
    save_dataset(ds, tmp_path / "d1.ladd")
    back = load_dataset(tmp_path / "d1.ladd")
    save_dataset(back, tmp_path / "d2.ladd")
    data_rt = (tmp_path / "d1.ladd").read_bytes() == (tmp_path / "d2.ladd").read_bytes()
    data_rt &= np.array_equal(back.states, ds.states) and np.array_equal(back.q, ds.q)
    elapsed = time.perf_counter() - t0
    ok = same and same_table and model_rt and data_rt and elapsed < 60
    detail = (
        f"{len(a.artifacts)} artifact hashes identical={same}, table identical={same_table}, "
        f"model round-trip={model_rt}, dataset round-trip={data_rt}, {elapsed:.1f}s"
    )
    assert criterion(10, "determinism and round-trips", ok, detail)
