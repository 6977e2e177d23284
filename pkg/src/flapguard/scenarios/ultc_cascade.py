"""Radial feeder with two cascaded tap changers and a recovering load.

Topology, from the source outwards::

    v0 --j x0-- [hv bus] --T1 (ideal, tap m1)-- [mv bus, shunt b]
        --T2 (tap m2, leakage j x2 on the secondary)-- [load bus, exp-recovery load]

T1 regulates the mv bus voltage ``v1`` and T2 the load-bus voltage
``v2``.  The lagging T1 (53 s) and the faster T2 (19 s) chase each other
through the load's recovery and settle into a tap cycle of roughly 100 s.

The network is solved each step by a backward ladder sweep from the load
bus: given the load voltage magnitude the sweep yields the source voltage
magnitude, and a damped scalar Newton iteration adjusts the load voltage
until that matches ``v0``.
"""

from __future__ import annotations

import math
from typing import Any, Dict, List, Mapping, Sequence, Tuple

from ..detector import Detector
from ..devices import ExpRecoveryLoad, UltcState, ultc_block, ultc_step
from ..engine import EventLog, log_detection, steps_per
from ..errors import AlgebraicSolveFailed, ConfigInvalid
from .common import detector_defaults, detector_from, require_positive, select_observables

KIND = "ultc_cascade"

_DETECTOR = dict(
    window_seconds=300.0,
    shift_seconds=30.0,
    t_min=80.0,
    t_max=120.0,
    r_threshold=0.35,
    epsilon=1e-3,
    sigma_floor=1e-9,
    extended_buffer=True,
)

DEFAULTS: Dict[str, Any] = {
    "sim.dt": 0.1,
    "sim.t_end": 1500.0,
    "sim.seed": 0,
    "mitigation": True,
    "observables": "",
    "source.v0": 1.0,
    "source.x0": 0.1,
    "feeder.b_shunt": 3.33,
    "feeder.x_t2": 0.18,
    "ultc1.tap": 1.0,
    "ultc1.step": 0.02,
    "ultc1.delay": 53.0,
    "ultc1.m_min": 0.8,
    "ultc1.m_max": 1.2,
    "ultc1.v_min": 0.99,
    "ultc1.v_max": 1.01,
    "ultc2.tap": 1.0,
    "ultc2.step": 0.05,
    "ultc2.delay": 19.0,
    "ultc2.m_min": 0.8,
    "ultc2.m_max": 1.2,
    "ultc2.v_min": 0.99,
    "ultc2.v_max": 1.01,
    "load.p0": 2.0,
    "load.q0": 0.5,
    "load.T_p": 10.0,
    "load.T_q": 5.0,
    "load.x_p0": 0.0,
    "load.x_q0": 0.0,
    "load.sign_convention": "subtractive",
    "solver.max_iterations": 20,
    "solver.tolerance": 1e-12,
    "solver.max_step": 0.05,
    "detector.enabled": True,
    "detector.dt": 1.0,
    "log.evals": True,
}
DEFAULTS.update(detector_defaults("detector.upstream", persistence=4, **_DETECTOR))
DEFAULTS.update(detector_defaults("detector.downstream", persistence=8, **_DETECTOR))

OBSERVABLES = ("v1", "v2", "m1", "m2", "x_p", "x_q", "p_load", "q_load", "v_hv")


class FeederSolver:
    """Ladder sweep plus damped Newton solve of the three-bus feeder."""

    def __init__(self, v0, x0, b_shunt, x_t2, load: ExpRecoveryLoad,
                 max_iterations=20, tolerance=1e-12, max_step=0.05):
        self.v0 = v0
        self.x0 = x0
        self.b_shunt = b_shunt
        self.x_t2 = x_t2
        self.load = load
        self.max_iterations = int(max_iterations)
        self.tolerance = tolerance
        self.max_step = max_step
        self.v_guess = 1.0
        self.max_iterations_used = 0
        self.max_residual = 0.0

    def sweep(self, v_load: float, m1: float, m2: float, x_p: float, x_q: float):
        """Return ``(|v_source|, |v_mv|, |v_hv|, p, q)`` for a load voltage magnitude."""
        p, q = self.load.powers(v_load, x_p, x_q)
        v = complex(v_load, 0.0)
        i = complex(p, -q) / v  # conj(S / V) with V real
        v = v + 1j * self.x_t2 * i
        v = m2 * v
        i = i / m2
        v_mv = v
        i = i + 1j * self.b_shunt * v
        v = m1 * v
        i = i / m1
        v_hv = v
        v_src = v + 1j * self.x0 * i
        return abs(v_src), abs(v_mv), abs(v_hv), p, q

    def solve(self, m1: float, m2: float, x_p: float, x_q: float) -> float:
        """Load-bus voltage magnitude that reproduces the source voltage."""
        v = self.v_guess
        h_step = 1e-7
        for it in range(self.max_iterations + 1):
            mismatch = self.sweep(v, m1, m2, x_p, x_q)[0] - self.v0
            if abs(mismatch) < self.tolerance:
                self.v_guess = v
                self.max_iterations_used = max(self.max_iterations_used, it)
                self.max_residual = max(self.max_residual, abs(mismatch))
                return v
            if it == self.max_iterations:
                break
            slope = (self.sweep(v + h_step, m1, m2, x_p, x_q)[0] - self.v0 - mismatch) / h_step
            if slope == 0.0 or not math.isfinite(slope):
                break
            step = -mismatch / slope
            if abs(step) > self.max_step:
                step = math.copysign(self.max_step, step)
            v += step
            if not v > 0:
                break
        raise AlgebraicSolveFailed(
            f"feeder solve did not converge in {self.max_iterations} iterations "
            f"(m1={m1:.4f}, m2={m2:.4f}, x_p={x_p:.4g}, x_q={x_q:.4g})"
        )


class UltcCascadeModel:
    kind = KIND

    def __init__(self, params: Mapping[str, Any]):
        require_positive(params, "sim.dt", "source.v0", "detector.dt")
        if params["source.x0"] < 0 or params["feeder.x_t2"] < 0:
            raise ConfigInvalid("feeder reactances must be >= 0")
        self.dt_sim = float(params["sim.dt"])
        self.t_end = float(params["sim.t_end"])
        self.mitigation = bool(params["mitigation"])
        self.log_evals = params["log.evals"]
        self.load = ExpRecoveryLoad(
            p0=params["load.p0"],
            q0=params["load.q0"],
            T_p=params["load.T_p"],
            T_q=params["load.T_q"],
            x_p=params["load.x_p0"],
            x_q=params["load.x_q0"],
            sign_convention=params["load.sign_convention"],
        )
        self.solver = FeederSolver(
            params["source.v0"],
            params["source.x0"],
            params["feeder.b_shunt"],
            params["feeder.x_t2"],
            self.load,
            params["solver.max_iterations"],
            params["solver.tolerance"],
            params["solver.max_step"],
        )
        self.ultcs: List[UltcState] = []
        for i, role in ((1, "upstream"), (2, "downstream")):
            pre = f"ultc{i}"
            self.ultcs.append(
                UltcState(
                    id=pre,
                    tap=params[f"{pre}.tap"],
                    step=params[f"{pre}.step"],
                    m_min=params[f"{pre}.m_min"],
                    m_max=params[f"{pre}.m_max"],
                    v_min=params[f"{pre}.v_min"],
                    v_max=params[f"{pre}.v_max"],
                    delay=params[f"{pre}.delay"],
                    persistence_M=params[f"detector.{role}.persistence"],
                )
            )
        self.detectors = None
        if params["detector.enabled"]:
            self.det_every = steps_per(params["detector.dt"], self.dt_sim, "detector.dt")
            self.detectors = [
                Detector(detector_from(params, f"detector.{role}", params["detector.dt"]))
                for role in ("upstream", "downstream")
            ]
        self.observables, self._obs_idx = select_observables(params["observables"], OBSERVABLES)
        self._bus: Tuple[float, ...] = (1.0, 1.0, 1.0, 0.0, 0.0)

    def initial_state(self) -> List[float]:
        return [self.load.x_p, self.load.x_q]

    def _solve(self, x: Sequence[float]) -> Tuple[float, ...]:
        m1, m2 = self.ultcs[0].tap, self.ultcs[1].tap
        v_load = self.solver.solve(m1, m2, x[0], x[1])
        _, v_mv, v_hv, p, q = self.solver.sweep(v_load, m1, m2, x[0], x[1])
        return v_mv, v_load, v_hv, p, q

    def derivatives(self, t: float, x: Sequence[float]) -> List[float]:
        v_load = self.solver.solve(self.ultcs[0].tap, self.ultcs[1].tap, x[0], x[1])
        return list(self.load.derivatives(v_load, x[0], x[1]))

    def solve_algebraic(self, t: float, x: Sequence[float]) -> None:
        self._bus = self._solve(x)

    def control(self, k: int, t: float, x: List[float], log: EventLog) -> List[float]:
        # Both the tap logic and the detectors act on the voltages measured
        # at the start of the step.
        measured = (self._bus[0], self._bus[1])
        moved = False
        for ultc, v in zip(self.ultcs, measured):
            before = ultc.tap
            if ultc_step(ultc, v, t):
                log.append(t, ultc.id, "TAP", prev=before, value=ultc.tap)
                moved = True
        if self.detectors is not None and k % self.det_every == 0:
            for ultc, det, v in zip(self.ultcs, self.detectors, measured):
                out = det.step(v)
                log_detection(log, t, ultc.id, out, self.log_evals)
                if self.mitigation and out.flag_rising_edge and not ultc.blocked:
                    ultc_block(ultc)
                    log.append(t, ultc.id, "BLOCK", counter=out.counter, value=ultc.tap)
        if moved:
            self._bus = self._solve(x)
        self.load.x_p, self.load.x_q = x[0], x[1]
        return x

    def observe(self, t: float, x: Sequence[float]) -> List[float]:
        v_mv, v_load, v_hv, p, q = self._bus
        full = (v_mv, v_load, self.ultcs[0].tap, self.ultcs[1].tap, x[0], x[1], p, q, v_hv)
        return [full[i] for i in self._obs_idx]

    def summary_extras(self) -> Dict[str, Any]:
        return {
            "newton_max_iterations": self.solver.max_iterations_used,
            "newton_max_residual": self.solver.max_residual,
            "final_taps": {u.id: u.tap for u in self.ultcs},
            "blocked": {u.id: u.blocked for u in self.ultcs},
        }


def build_ultc_cascade(params: Mapping[str, Any]) -> UltcCascadeModel:
    return UltcCascadeModel(params)
