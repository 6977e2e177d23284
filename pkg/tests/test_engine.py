import math

import numpy as np
import pytest

from relaxation import HeldVoltageLoad

from flapguard import default_config, run, simulate
from flapguard.engine import (
    EVENT_KINDS,
    EventLog,
    RngStreams,
    observe,
    rk4_step,
    steps_per,
)
from flapguard.errors import ConfigInvalid, NumericalFailure, UnknownObservable
from flapguard.scenarios import build_model


def short(kind, **kw):
    return default_config(kind, **kw)


# ---------------------------------------------------------------------------
# EventLog
# ---------------------------------------------------------------------------


def test_event_log_rejects_unknown_kind_and_time_reversal():
    log = EventLog()
    log.append(1.0, "a", "TAP", prev=1.0, value=1.02)
    with pytest.raises(ValueError):
        log.append(1.0, "a", "EXPLODE")
    with pytest.raises(ValueError):
        log.append(0.5, "a", "TAP")


def test_event_log_orders_ties_by_device_id():
    log = EventLog()
    log.append(1.0, "b", "EVAL", counter=1)
    log.append(1.0, "a", "EVAL", counter=2)
    log.append(1.0, "a", "FLAG_UP", counter=2)
    log.append(2.0, "a", "EVAL", counter=3)
    log.finalize()
    assert [(e.t, e.device_id, e.kind) for e in log] == [
        (1.0, "a", "EVAL"), (1.0, "a", "FLAG_UP"), (1.0, "b", "EVAL"), (2.0, "a", "EVAL")
    ]
    assert log.count("EVAL") == 3
    assert log.count("EVAL", "a") == 2
    assert log.first("FLAG_UP").counter == 2
    assert log.first("BLOCK") is None
    assert len(log) == 4


def assert_ordered(log):
    events = list(log)
    for a, b in zip(events, events[1:]):
        assert (a.t, a.device_id) <= (b.t, b.device_id)
        assert a.kind in EVENT_KINDS


@pytest.mark.parametrize(
    "kind, overrides",
    [
        ("dfr_frequency", dict(sim__t_end=120.0)),
        ("ultc_cascade", dict(sim__t_end=1000.0)),
        ("avr_limit_cycle", dict(sim__t_end=40.0)),
    ],
)
def test_every_scenario_log_is_ordered(kind, overrides):
    assert_ordered(run(short(kind, **overrides)).events)


# ---------------------------------------------------------------------------
# RNG streams
# ---------------------------------------------------------------------------


def test_stream_draws_independent_of_other_streams():
    alone = RngStreams(7).stream("dfr05")
    a = [alone.uniform() for _ in range(1500)]
    mixed = RngStreams(7)
    s5 = mixed.stream("dfr05")
    b = []
    for i in range(1500):
        mixed.stream("dfr01").uniform()
        b.append(s5.uniform())
        if i % 3 == 0:
            mixed.stream("dfr20").uniform()
    assert a == b


def test_streams_differ_by_device_and_seed():
    a = RngStreams(1).stream("x")
    b = RngStreams(1).stream("y")
    c = RngStreams(2).stream("x")
    da = [a.uniform() for _ in range(10)]
    assert da != [b.uniform() for _ in range(10)]
    assert da != [c.uniform() for _ in range(10)]


def test_uniform_draws_lie_in_unit_interval():
    s = RngStreams(3).stream("u")
    xs = np.array([s.uniform() for _ in range(5000)])
    assert xs.min() >= 0.0 and xs.max() < 1.0
    assert abs(xs.mean() - 0.5) < 0.02
    assert 0.0 < s.uniform_open() < 1.0


def test_removing_a_dfr_leaves_other_units_draws_unchanged():
    full = build_model(short("dfr_frequency", dfr__count=20))
    fewer = build_model(short("dfr_frequency", dfr__count=19))
    assert [u.id for u in fewer.units] == [u.id for u in full.units[:19]]
    for a, b in zip(full.streams[:19], fewer.streams):
        assert [a.uniform() for _ in range(300)] == [b.uniform() for _ in range(300)]


def test_removing_a_dfr_in_a_run_keeps_decision_draws_aligned():
    # Each unit consumes exactly one draw per control instant, so decision j of
    # a unit uses its j-th draw regardless of population size.
    res = run(short("dfr_frequency", sim__t_end=30.0, dfr__count=19))
    model = res.model
    n_decisions = int(round(30.0 / 0.1))
    assert all(s.draws == n_decisions for s in model.streams)


# ---------------------------------------------------------------------------
# Integrator and stepping
# ---------------------------------------------------------------------------


def test_rk4_step_on_linear_decay():
    x = rk4_step(lambda t, x: [-x[0]], 0.0, [1.0], 0.1)
    h = 0.1
    assert x[0] == pytest.approx(1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24, abs=1e-15)


def test_steps_per_requires_whole_multiples():
    assert steps_per(0.1, 0.01) == 10
    assert steps_per(53.0, 0.1) == 530
    with pytest.raises(ConfigInvalid):
        steps_per(0.015, 0.01)
    with pytest.raises(ConfigInvalid):
        steps_per(0.0, 0.01)


def test_held_voltage_decay_matches_time_constant():
    model = HeldVoltageLoad(v=1.0, dt=0.1, t_end=10.0, x_p0=0.3)
    res = simulate(model)
    _, xp = res.observe("x_p")
    assert xp[-1] == pytest.approx(0.3 * math.exp(-1.0), rel=0.01)


def test_step_halving_shows_fourth_order_convergence():
    errs = []
    for dt in (2.0, 1.0, 0.5):
        model = HeldVoltageLoad(v=0.95, dt=dt, t_end=20.0, x_p0=0.05)
        res = simulate(model)
        _, xp = res.observe("x_p")
        errs.append(abs(xp[-1] - model.exact_x_p(20.0)))
    for coarse, fine in zip(errs, errs[1:]):
        assert 12.0 < coarse / fine < 20.0


def test_zero_length_run():
    for kind in ("dfr_frequency", "ultc_cascade", "avr_limit_cycle"):
        res = run(short(kind, sim__t_end=0.0))
        assert res.times.tolist() == [0.0]
        assert len(res.events) == 0


def test_t_end_must_be_a_step_multiple():
    with pytest.raises(ConfigInvalid):
        run(short("avr_limit_cycle", sim__t_end=1.005))


def test_blow_up_raises_numerical_failure():
    class Runaway(HeldVoltageLoad):
        def derivatives(self, t, x):
            return [x[0] * x[0] * 1e3, 0.0]

    with pytest.raises(NumericalFailure):
        simulate(Runaway(v=1.0, dt=0.1, t_end=50.0, x_p0=1.0))


def test_same_config_twice_gives_identical_results():
    cfg = short("dfr_frequency", sim__t_end=60.0, sim__seed=3)
    a, b = run(cfg), run(cfg)
    np.testing.assert_array_equal(a.data, b.data)
    assert list(a.events) == list(b.events)


def test_seed_changes_the_run():
    a = run(short("dfr_frequency", sim__t_end=30.0, sim__seed=1))
    b = run(short("dfr_frequency", sim__t_end=30.0, sim__seed=2))
    assert not np.array_equal(a.data, b.data)


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------


def test_observables_exist_and_unknown_raises():
    dfr = run(short("dfr_frequency", sim__t_end=1.0))
    t, w = observe(dfr, "delta_omega")
    assert len(t) == len(w) == 101
    ultc = run(short("ultc_cascade", sim__t_end=1.0))
    ultc.observe("v1")
    ultc.observe("v2")
    with pytest.raises(UnknownObservable):
        ultc.observe("v99")
    with pytest.raises(KeyError):
        ultc.observe("v99")


def test_observable_selection():
    res = run(short("ultc_cascade", sim__t_end=1.0, observables="v2,m1"))
    assert res.observables == ("v2", "m1")
    with pytest.raises(ConfigInvalid):
        run(short("ultc_cascade", sim__t_end=1.0, observables="v2,nope"))


def test_summary_contents():
    res = run(short("ultc_cascade"))
    s = res.summary
    assert s["scenario"] == "ultc_cascade"
    assert s["t_end"] == 1500.0
    assert s["first_detection_s"]["ultc1"] == res.events.first("FLAG_UP", "ultc1").t
    assert s["event_counts"]["BLOCK"] == 1
    assert set(s["tail_stats"]) == set(res.observables)
    assert s["tail_window_s"] == pytest.approx(150.0)
