import numpy as np
import pytest

from ladistill import mcs
from ladistill.baseline import OFFSET_CLAMP_DB, OllaPolicy, OllaState, illa_select, olla_update
from ladistill.env import LinkAdaptationEnv
from ladistill.linksim import bler, make_scenario


def test_illa_extremes():
    assert illa_select(mcs.required_sinr_db(0) - 20) == 0
    assert illa_select(mcs.required_sinr_db(27) + 20) == 27


def test_illa_selection_meets_target():
    for s in np.linspace(-5, 30, 71):
        m = illa_select(s, 0.0)
        if m > 0:
            assert bler(m, s) <= 0.1 + 1e-12
        if m < 27:
            assert bler(m + 1, s) > 0.1


@pytest.mark.parametrize("sinr", [-3.0, 8.0, 17.5, 26.0])
def test_offset_never_raises_index(sinr):
    picks = [illa_select(sinr, off) for off in np.linspace(-10, 10, 81)]
    assert all(b <= a for a, b in zip(picks, picks[1:]))


def test_step_down_fixed_point():
    st = OllaState(step_up_db=1.0, target_bler=0.1)
    assert st.step_down_db == pytest.approx(1.0 / 9.0, abs=1e-12)
    # zero expected drift at the target error rate
    assert 0.1 * st.step_up_db - 0.9 * st.step_down_db == pytest.approx(0.0, abs=1e-12)


def test_ack_then_nack():
    st = OllaState(offset_db=1.0, step_up_db=0.5)
    after = olla_update(olla_update(st, True), False)
    assert after.offset_db - st.offset_db == pytest.approx(st.step_up_db - st.step_down_db)


def test_offset_clamped():
    st = OllaState(step_up_db=3.0)
    for _ in range(20):
        st = olla_update(st, False)
    assert st.offset_db == OFFSET_CLAMP_DB
    for _ in range(1000):
        st = olla_update(st, True)
    assert st.offset_db == -OFFSET_CLAMP_DB


def test_zero_drift_at_target_bler():
    rng = np.random.default_rng(0)
    st = OllaState(step_up_db=0.5, target_bler=0.1)
    n = 100_000
    acks = rng.random(n) >= 0.1
    # unclamped increments: the walk itself is free to wander, its mean step is not
    inc = np.where(acks, -st.step_down_db, st.step_up_db)
    assert abs(inc.mean()) < 0.1
    step_sd = np.sqrt(0.1 * 0.9) * (st.step_up_db + st.step_down_db)
    assert abs(inc.mean()) < 5 * step_sd / np.sqrt(n)


def test_long_run_first_tx_bler_converges_to_target():
    cfg = make_scenario(mean_sinr_db=14.0, fading_sigma_db=1.0, fading_rho=0.0)
    pol = OllaPolicy(step_up_db=0.5, target_bler=0.1)
    env = LinkAdaptationEnv(cfg, 0)
    n = 20_000
    fails = 0
    for _ in range(n):
        s = env.reset()
        a = pol(s)
        s, _, info = env.step(a)
        pol.observe(a, info["success"], info["attempt"])
        fails += not info["success"]
        while s is not None:
            a = pol(s)
            s, _, info = env.step(a)
            pol.observe(a, info["success"], info["attempt"])
    assert abs(fails / n - 0.1) < 0.03
    assert abs(pol.state.offset_db) < OFFSET_CLAMP_DB


def test_policy_updates_only_on_first_transmission():
    pol = OllaPolicy(step_up_db=1.0)
    pol.observe(5, False, 1)
    pol.observe(5, False, 3)
    assert pol.state.offset_db == 0.0
    pol.observe(5, False, 0)
    assert pol.state.offset_db == 1.0
    pol.reset()
    assert pol.state.offset_db == 0.0
