import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flapguard.devices import (
    AvrGainSwitcher,
    DfrUnit,
    ExpRecoveryLoad,
    UltcState,
    avr_gain_decision,
    cap_active_units,
    dfr_activation_signal,
    dfr_aggregate_power,
    dfr_mitigate,
    dfr_schedule_release,
    dfr_switch,
    dfr_try_release,
    exp_load_derivatives,
    ultc_block,
    ultc_step,
)
from flapguard.engine import RngStreams
from flapguard.errors import ConfigInvalid

THR = 2.75e-4


# ---------------------------------------------------------------------------
# DFR
# ---------------------------------------------------------------------------


def test_activation_signal_examples():
    assert dfr_activation_signal(0.0, THR) == 0.5
    assert dfr_activation_signal(THR, THR) == 1.0
    assert dfr_activation_signal(-THR, THR) == 0.0
    assert dfr_activation_signal(-2 * THR, THR) == 0.0
    assert dfr_activation_signal(5 * THR, THR) == 1.0
    with pytest.raises(ValueError):
        dfr_activation_signal(0.0, 0.0)


@given(st.floats(-1, 1), st.floats(1e-6, 1e-2))
def test_activation_signal_is_a_probability(dw, thr):
    assert 0.0 <= dfr_activation_signal(dw, thr) <= 1.0


def test_switch_examples():
    unit = DfrUnit("u")
    for x in (0.0, 0.3, 0.999999):
        assert dfr_switch(unit, 1.0, x) == 1
    off = DfrUnit("u", beta_init=0.0)
    for x in (1e-12, 0.3, 0.999999):
        assert dfr_switch(off, 1.0, x) == 0
    half = DfrUnit("u", beta_init=0.5)
    assert dfr_switch(half, 0.5, 0.2) == 1
    assert dfr_switch(half, 0.5, 0.3) == 0


def test_switch_law_matches_binomial():
    stream = RngStreams(42).stream("dfr01")
    q = 0.37
    unit = DfrUnit("dfr01", beta_init=1.0)
    n = 100_000
    on = sum(dfr_switch(unit, q, stream.uniform()) for _ in range(n))
    sigma = math.sqrt(q * (1 - q) / n)
    assert abs(on / n - q) <= 3 * sigma


def test_mitigation_scales_beta_once():
    unit = DfrUnit("u", mitigation_scale=0.3)
    dfr_mitigate(unit)
    assert unit.beta == pytest.approx(0.3)
    dfr_mitigate(unit)
    assert unit.beta == pytest.approx(0.3)


def test_full_disconnection():
    unit = DfrUnit("u", mitigation_scale=0.0)
    dfr_mitigate(unit)
    assert unit.beta == 0.0
    assert all(dfr_switch(unit, 1.0, x) == 0 for x in np.linspace(1e-9, 0.999, 50))


def test_release_after_hold_then_remitigate_does_not_compound():
    unit = DfrUnit("u", mitigation_scale=0.3, release_hold=30.0)
    dfr_mitigate(unit)
    dfr_schedule_release(unit, 100.0)
    assert not dfr_try_release(unit, 120.0, flag=False)
    assert not dfr_try_release(unit, 131.0, flag=True)
    assert dfr_try_release(unit, 131.0, flag=False)
    assert unit.beta == 1.0 and not unit.mitigated
    dfr_mitigate(unit)
    assert unit.beta == pytest.approx(0.3)


def test_mitigate_cancels_pending_release():
    unit = DfrUnit("u")
    dfr_mitigate(unit)
    dfr_schedule_release(unit, 0.0)
    dfr_mitigate(unit)
    assert unit.release_at is None
    assert not dfr_try_release(unit, 1e6, flag=False)


def test_aggregate_power():
    units = [DfrUnit(f"u{i}") for i in range(20)]
    assert dfr_aggregate_power(units) == 0
    for u in units:
        u.kappa = 1
    assert dfr_aggregate_power(units) == pytest.approx(0.20)
    for u in units[:10]:
        u.kappa = 0
    assert dfr_aggregate_power(units) == pytest.approx(0.10)


def test_cap_active_units_keeps_lowest_indices():
    assert cap_active_units([1, 1, 0, 1, 1, 1], 0.5) == [1, 1, 0, 1, 0, 0]
    assert cap_active_units([0, 1, 0, 1], 0.5) == [0, 1, 0, 1]


def test_dfr_validation():
    with pytest.raises(ConfigInvalid):
        DfrUnit("u", beta_init=-1.0)
    with pytest.raises(ConfigInvalid):
        DfrUnit("u", omega_threshold=0.0)
    with pytest.raises(ConfigInvalid):
        DfrUnit("u", kappa=2)
    with pytest.raises(ConfigInvalid):
        DfrUnit("u", mitigation_scale=1.5)


# ---------------------------------------------------------------------------
# ULTC
# ---------------------------------------------------------------------------


def test_ultc_raises_tap_above_deadband():
    u = UltcState("t2", tap=1.0, step=0.05, delay=19.0)
    assert ultc_step(u, 1.02, 0.0)
    assert u.tap == pytest.approx(1.05)
    assert u.next_allowed_time == 19.0


def test_ultc_deadband_and_saturation():
    u = UltcState("t", tap=1.0)
    assert not ultc_step(u, 1.00, 0.0)
    top = UltcState("t", tap=1.2, m_max=1.2)
    assert not ultc_step(top, 1.05, 0.0)
    assert top.tap == 1.2


def test_ultc_respects_delay():
    u = UltcState("t", tap=1.0, step=0.02, delay=53.0)
    assert ultc_step(u, 0.95, 10.0)
    assert not ultc_step(u, 0.95, 62.9)
    assert ultc_step(u, 0.95, 63.0)
    assert u.tap == pytest.approx(0.96)


def test_ultc_block_freezes_and_is_idempotent():
    u = UltcState("t", tap=1.0)
    other = UltcState("t", tap=1.0)
    ultc_block(u)
    assert ultc_block(u).blocked
    taps = []
    for k, v in enumerate([0.9, 0.9, 1.1, 0.9]):
        assert not ultc_step(u, v, 100.0 * k)
        assert ultc_step(other, v, 100.0 * k)
        taps.append(other.tap)
    assert u.tap == 1.0
    assert taps == pytest.approx([0.98, 0.96, 0.98, 0.96])


def test_ultc_validation():
    with pytest.raises(ConfigInvalid):
        UltcState("t", tap=1.3, m_max=1.2)
    with pytest.raises(ConfigInvalid):
        UltcState("t", v_min=1.01, v_max=0.99)
    with pytest.raises(ConfigInvalid):
        UltcState("t", delay=0.0)


@given(
    st.lists(st.tuples(st.floats(0.8, 1.2), st.floats(0.0, 30.0)), min_size=1, max_size=80),
)
def test_ultc_invariants_over_random_traces(trace):
    u = UltcState("t", tap=1.0, step=0.05, delay=19.0)
    t = 0.0
    last_move = None
    for v, gap in trace:
        t += gap
        before = u.tap
        moved = ultc_step(u, v, t)
        assert u.m_min <= u.tap <= u.m_max
        if u.v_min <= v <= u.v_max:
            assert not moved
        if moved:
            assert u.tap != before
            if last_move is not None:
                assert t - last_move >= u.delay - 1e-9
            last_move = t


# ---------------------------------------------------------------------------
# Exponential-recovery load
# ---------------------------------------------------------------------------


def test_exp_load_equilibrium_at_nominal_voltage():
    load = ExpRecoveryLoad()
    dxp, dxq, p3, q3 = exp_load_derivatives(load, 1.0)
    assert dxp == 0.0 and dxq == 0.0
    assert p3 == 2.0 and q3 == 0.5


def test_exp_load_low_voltage_rate():
    dxp, dxq, _, _ = exp_load_derivatives(ExpRecoveryLoad(), 0.9)
    assert dxp == pytest.approx((2 - 1.62) / 10)
    assert dxq == pytest.approx((0.5 - 0.45) / 5)


def test_exp_load_sign_conventions():
    subtractive = ExpRecoveryLoad(x_p=0.1, x_q=0.02)
    additive = ExpRecoveryLoad(x_p=0.1, x_q=0.02, sign_convention="additive")
    _, _, p_a, q_a = exp_load_derivatives(subtractive, 1.0)
    _, _, p_b, q_b = exp_load_derivatives(additive, 1.0)
    assert p_a == pytest.approx(1.9) and q_a == pytest.approx(0.48)
    assert p_b == pytest.approx(2.1) and q_b == pytest.approx(0.52)
    with pytest.raises(ConfigInvalid):
        ExpRecoveryLoad(sign_convention="other")
    with pytest.raises(ValueError):
        exp_load_derivatives(subtractive, 0.0)


# ---------------------------------------------------------------------------
# AVR gain switcher
# ---------------------------------------------------------------------------


def test_gain_decision_examples():
    s = AvrGainSwitcher("a", k_init=250.0, k_safe=100.0, latch=False)
    assert avr_gain_decision(s, 1.0, 0.999) == 100.0
    s = AvrGainSwitcher("a", k_init=250.0, k_safe=100.0)
    for x in np.linspace(1e-6, 0.999, 20):
        assert avr_gain_decision(s, 0.0, x) == 250.0
    assert avr_gain_decision(s, 0.6, 0.7) == 250.0
    assert avr_gain_decision(s, 0.6, 0.55) == 100.0


def test_gain_latch():
    s = AvrGainSwitcher("a", k_init=250.0, k_safe=100.0, latch=True)
    avr_gain_decision(s, 0.6, 0.1)
    assert avr_gain_decision(s, 0.0, 0.9) == 100.0
    free = AvrGainSwitcher("a", k_init=250.0, k_safe=100.0, latch=False)
    avr_gain_decision(free, 0.6, 0.1)
    assert avr_gain_decision(free, 0.0, 0.9) == 250.0


def test_gain_switcher_validation():
    with pytest.raises(ConfigInvalid):
        AvrGainSwitcher("a", k_init=100.0, k_safe=100.0)
    with pytest.raises(ConfigInvalid):
        AvrGainSwitcher("a", k_init=100.0, k_safe=0.0)


def test_first_switch_hazard_equals_alpha():
    alpha = 0.3
    stream = RngStreams(9).stream("avr1")
    trials, first = 20_000, 0
    for _ in range(trials):
        s = AvrGainSwitcher("avr1", k_init=250.0, k_safe=100.0)
        first += avr_gain_decision(s, alpha, stream.uniform_open()) == 100.0
    sigma = math.sqrt(alpha * (1 - alpha) / trials)
    assert abs(first / trials - alpha) <= 3 * sigma
