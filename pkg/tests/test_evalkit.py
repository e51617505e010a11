import csv
import json
import math

import numpy as np
import pytest

from ladistill import mcs
from ladistill.baseline import OllaPolicy
from ladistill.evalkit import (
    BenchmarkScenario,
    FixedPolicy,
    GreedyPolicy,
    MetricsReport,
    action_pdf,
    evaluate,
    js_divergence,
    read_table2,
    relative_gain,
    report_write,
    scenario_suite,
    throughput_cdf,
)
from ladistill.linksim import make_scenario
from ladistill.net import STUDENT_DIMS, init_net


def channel(bler_value):
    return BenchmarkScenario("flat", make_scenario(mean_sinr_db=10.0, bler_override=bler_value), (0.0,), 123)


def report(t, b, r, n=1):
    return MetricsReport(t, b, r, n, np.full(n, t), np.zeros(28, dtype=np.int64))


# ---------------------------------------------------------------- scenarios


def test_suite_shape():
    suite = scenario_suite()
    assert set(suite) == {"SCSU", "MIMO", "mMIMO"}
    assert suite["SCSU"].config.n_fb_ues == 1 and len(suite["SCSU"].ue_offsets_db) == 1
    for name in ("MIMO", "mMIMO"):
        assert suite[name].config.n_fb_ues == 10 and len(suite[name].ue_offsets_db) == 10
    assert suite["MIMO"].config.antenna_array == "MIMO4"
    assert suite["mMIMO"].config.antenna_array == "mMIMO64"
    # evaluation seeds sit outside the 31-bit range used by training draws
    assert all(b.seed >= 2**31 and b.config.seed >= 2**31 for b in suite.values())


def test_suite_configs_frozen():
    bench = scenario_suite()["MIMO"]
    with pytest.raises(AttributeError):
        bench.config.cell_radius_m = 1.0
    assert scenario_suite()["MIMO"] == bench


# ---------------------------------------------------------------- evaluate


@pytest.mark.parametrize("m", [0, 10, 27])
def test_fixed_policy_on_error_free_channel(m):
    rep = evaluate(FixedPolicy(m), channel(0.0), 300)
    assert rep.mean_ue_throughput == pytest.approx(mcs.SPECTRAL_EFFICIENCY[m])
    assert rep.bler == 0.0
    assert rep.mean_episodic_reward == pytest.approx(mcs.SPECTRAL_EFFICIENCY[m])


def test_fixed_policy_on_always_failing_channel():
    alpha, n_tx = 0.5, 5
    rep = evaluate(FixedPolicy(4), channel(1.0), 200, alpha=alpha)
    assert rep.mean_ue_throughput == 0.0
    assert rep.bler == 1.0
    assert rep.mean_episodic_reward == pytest.approx(-alpha * sum(range(n_tx)))
    assert rep.n_transmissions == 200 * n_tx


def test_evaluate_deterministic_and_histograms_consistent():
    bench = scenario_suite()["MIMO"]
    a = evaluate(OllaPolicy(), bench, 400)
    b = evaluate(OllaPolicy(), bench, 400)
    assert a.summary() == b.summary()
    np.testing.assert_array_equal(a.action_counts, b.action_counts)
    assert a.action_counts.sum() == a.n_transmissions
    assert a.throughput_samples.size == 400
    assert 0.0 <= a.bler <= 1.0


def test_evaluation_side_effect_free():
    net = init_net(STUDENT_DIMS["3x32"], 0)
    before = net.param_hash()
    evaluate(GreedyPolicy(net), scenario_suite()["SCSU"], 200)
    action_pdf(GreedyPolicy(net), scenario_suite()["SCSU"], 200)
    assert net.param_hash() == before


# ---------------------------------------------------------------- relative gains


def test_relative_gain_examples():
    assert relative_gain(report(1.12, 0.1, 1.0), report(1.00, 0.1, 1.0)).delta_t == pytest.approx(12.0)
    assert relative_gain(report(1.0, 0.1, 0.98), report(1.0, 0.1, 1.0)).delta_r == pytest.approx(-2.0)
    c = relative_gain(report(2.0, 0.3, 1.5), report(2.0, 0.3, 1.5))
    assert (c.delta_t, c.delta_bler, c.delta_r) == (0.0, 0.0, 0.0)
    # BLER sign is raw: more errors is positive
    assert relative_gain(report(1.0, 0.2, 1.0), report(1.0, 0.1, 1.0)).delta_bler == pytest.approx(100.0)


def test_relative_gain_zero_denominator_flagged():
    c = relative_gain(report(1.0, 0.1, 1.0), report(0.0, 0.0, 1.0))
    assert math.isnan(c.delta_t) and math.isnan(c.delta_bler)
    assert c.undefined == ("delta_t", "delta_bler")


def test_relative_gain_negative_reference_keeps_sign():
    # a less negative reward is an improvement
    assert relative_gain(report(1.0, 0.1, -0.5), report(1.0, 0.1, -1.0)).delta_r == pytest.approx(50.0)


# ---------------------------------------------------------------- distributions


def test_action_pdf_fixed_is_one_hot():
    p = action_pdf(FixedPolicy(10), scenario_suite()["MIMO"], 1000)
    assert p[10] == 1.0 and p.sum() == 1.0


def test_action_pdf_normalized_and_reproducible():
    net = init_net(STUDENT_DIMS["3x32"], 2)
    bench = scenario_suite()["mMIMO"]
    p = action_pdf(GreedyPolicy(net), bench, 777)
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_array_equal(p, action_pdf(GreedyPolicy(net), bench, 777))
    with pytest.raises(ValueError):
        action_pdf(GreedyPolicy(net), bench, 0)


def test_js_divergence_properties():
    p = np.full(28, 1 / 28)
    assert js_divergence(p, p) == 0.0
    a, b = np.eye(28)[0], np.eye(28)[5]
    assert js_divergence(a, b) == pytest.approx(math.log(2), abs=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, y = rng.dirichlet(np.ones(28)), rng.dirichlet(np.ones(28) * 0.3)
        d = js_divergence(x, y)
        assert d == pytest.approx(js_divergence(y, x), abs=1e-15)
        assert 0.0 <= d <= math.log(2)


def test_throughput_cdf():
    assert throughput_cdf([3.5]) == [(3.5, 1.0)]
    pts = throughput_cdf(np.random.default_rng(1).normal(size=10_000))
    vals = [v for v, _ in pts]
    cums = [c for _, c in pts]
    assert vals == sorted(vals) and cums == sorted(cums) and cums[-1] == 1.0
    median = next(v for v, c in pts if c >= 0.5)
    assert abs(median) < 0.05
    with pytest.raises(ValueError):
        throughput_cdf([])


# ---------------------------------------------------------------- report files


def _comparisons(reports):
    rows = []
    for mode in ("single", "multi"):
        for size in ("4x64", "4x32", "3x32"):
            for scen in reports:
                rows.append(
                    {
                        "distillation": mode,
                        "student": size,
                        "scenario": scen,
                        "comparison": relative_gain(reports[scen]["b"], reports[scen]["a"]),
                    }
                )
    return rows


def test_report_write_round_trip(tmp_path):
    suite = scenario_suite()
    reports = {
        name: {"a": evaluate(FixedPolicy(3), bench, 60), "b": evaluate(OllaPolicy(), bench, 60)}
        for name, bench in suite.items()
    }
    rows = _comparisons(reports)
    paths = report_write(reports, rows, tmp_path, manifest={"seed": 42}, svg=True)
    back = read_table2(paths["table2"])
    assert len(back) == 2 * 3 * 3
    for got, want in zip(back, rows):
        assert got["scenario"] == want["scenario"]
        c = want["comparison"]
        np.testing.assert_equal([got[k] for k in ("delta_t", "delta_bler", "delta_r")], [c.delta_t, c.delta_bler, c.delta_r])
        assert got["flag"] == ("undefined:delta_bler" if c.undefined else "")
    man = json.loads(paths["manifest"].read_text())
    assert man["seed"] == 42
    assert set(man["metrics"]) == set(suite)
    with open(tmp_path / "pdf_MIMO.csv") as fh:
        pdf_rows = list(csv.reader(fh))
    assert pdf_rows[0] == ["mcs", "a", "b"] and len(pdf_rows) == 29
    assert float(pdf_rows[4][1]) == 1.0
    for scen in suite:
        assert (tmp_path / f"cdf_{scen}.svg").read_text().startswith("<svg")
        assert (tmp_path / f"pdf_{scen}.svg").exists()


def test_report_write_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        report_write({}, [], blocker / "sub")
