"""Bank of coupled oscillators standing in for high-gain voltage regulators.

Each regulator loop ``i`` has an error state ``e_i`` and its rate ``de_i``::

    dde_i = -2 zeta(K_i) w0 de_i - w0^2 e_i - gamma de_i^3 + c sum_j (e_j - e_i)
    zeta(K) = zeta0 (1 - K / K_crit)

A gain above ``K_crit`` makes the loop negatively damped; the cubic rate
term bounds the growth, so the bank settles on a limit cycle whose
per-device amplitude grows with that device's gain.  Bus voltages are
``v_ref + e_i``.  A small kick on every rate state at ``disturbance.time``
starts the oscillation.

When its detector flags flapping, each device evaluates its gain switch
every ``avr.ctrl_interval`` seconds, dropping to ``avr.k_safe`` with
probability equal to its TEO impact angle.
"""

from __future__ import annotations

import math
from typing import Any, Dict, List, Mapping, Optional, Sequence

from ..detector import Detector
from ..devices import AvrGainSwitcher, avr_gain_decision
from ..engine import EventLog, RngStreams, log_detection, steps_per
from ..errors import ConfigInvalid
from ..teo import TeoTracker
from .common import detector_defaults, detector_from, require_positive, select_observables

KIND = "avr_limit_cycle"

TEO_ARM_MODES = ("disturbance", "flag")

DEFAULTS: Dict[str, Any] = {
    "sim.dt": 0.01,
    "sim.t_end": 120.0,
    "sim.seed": 0,
    "mitigation": True,
    "observables": "",
    "avr.count": 5,
    "avr.gain_min": 240.0,
    "avr.gain_max": 300.0,
    "avr.gains": "",
    "avr.k_safe": 100.0,
    "avr.ctrl_interval": 5.0,
    "avr.latch": True,
    "plant.omega0": 2.0 * math.pi / 1.25,
    "plant.zeta0": 1.0,
    "plant.k_crit": 270.0,
    "plant.saturation": 60.0,
    "plant.coupling": 1.0,
    "plant.v_ref": 1.0,
    "disturbance.time": 1.0,
    "disturbance.kick": 0.02,
    "teo.scale": 300.0,
    "teo.alpha_max": 90.0,
    "teo.arm": "disturbance",
    "detector.enabled": True,
    "detector.dt": 0.05,
    "log.evals": True,
}
DEFAULTS.update(
    detector_defaults(
        "detector",
        window_seconds=8.0,
        shift_seconds=1.0,
        t_min=1.0,
        t_max=1.5,
        r_threshold=0.8,
        epsilon=1e-3,
        persistence=3,
        sigma_floor=1e-9,
        extended_buffer=True,
    )
)


def _parse_gains(text: str, n: int) -> Optional[List[float]]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        return None
    try:
        gains = [float(s) for s in items]
    except ValueError:
        raise ConfigInvalid(f"avr.gains must be a comma-separated list of numbers, got {text!r}")
    if len(gains) != n:
        raise ConfigInvalid(f"avr.gains lists {len(gains)} values for {n} devices")
    return gains


class AvrLimitCycleModel:
    kind = KIND

    def __init__(self, params: Mapping[str, Any]):
        require_positive(
            params, "sim.dt", "avr.count", "avr.k_safe", "avr.ctrl_interval",
            "plant.omega0", "plant.k_crit", "teo.alpha_max",
        )
        if params["plant.saturation"] < 0 or params["plant.coupling"] < 0:
            raise ConfigInvalid("plant.saturation and plant.coupling must be >= 0")
        if params["teo.arm"] not in TEO_ARM_MODES:
            raise ConfigInvalid(f"teo.arm must be one of {TEO_ARM_MODES}")
        if not params["avr.gain_min"] <= params["avr.gain_max"]:
            raise ConfigInvalid("avr.gain_min must not exceed avr.gain_max")
        self.dt_sim = float(params["sim.dt"])
        self.t_end = float(params["sim.t_end"])
        self.mitigation = bool(params["mitigation"])
        self.log_evals = params["log.evals"]
        self.n = n = int(params["avr.count"])
        self.omega0 = params["plant.omega0"]
        self.zeta0 = params["plant.zeta0"]
        self.k_crit = params["plant.k_crit"]
        self.gamma = params["plant.saturation"]
        self.coupling = params["plant.coupling"]
        self.v_ref = params["plant.v_ref"]
        self.kick = params["disturbance.kick"]
        self.kick_step = int(round(params["disturbance.time"] / self.dt_sim))
        self.arm_mode = params["teo.arm"]

        rng = RngStreams(int(params["sim.seed"]))
        gains = _parse_gains(params["avr.gains"], n)
        if gains is None:
            lo, hi = params["avr.gain_min"], params["avr.gain_max"]
            plant_stream = rng.stream("plant")
            gains = [lo + (hi - lo) * plant_stream.uniform() for _ in range(n)]
        if not all(g > params["avr.k_safe"] for g in gains):
            raise ConfigInvalid("every initial gain must exceed avr.k_safe")

        self.switchers: List[AvrGainSwitcher] = [
            AvrGainSwitcher(
                id=f"avr{i + 1}",
                k_init=g,
                k_safe=params["avr.k_safe"],
                ctrl_interval=params["avr.ctrl_interval"],
                latch=params["avr.latch"],
                teo=TeoTracker(params["teo.scale"], params["teo.alpha_max"]),
            )
            for i, g in enumerate(gains)
        ]
        self.streams = [rng.stream(s.id) for s in self.switchers]
        self.next_decision = [0.0] * n
        self._damping = [0.0] * n
        self._refresh_damping()

        self.detectors = None
        if params["detector.enabled"]:
            self.det_every = steps_per(params["detector.dt"], self.dt_sim, "detector.dt")
            cfg = detector_from(params, "detector", params["detector.dt"])
            self.detectors = [Detector(cfg) for _ in self.switchers]
        steps_per(params["avr.ctrl_interval"], self.dt_sim, "avr.ctrl_interval")

        names = (
            [f"v{i + 1}" for i in range(n)]
            + [f"ka{i + 1}" for i in range(n)]
            + [f"teo{i + 1}" for i in range(n)]
        )
        self.observables, self._obs_idx = select_observables(params["observables"], tuple(names))
        self.first_flag_time: Optional[float] = None

    def _refresh_damping(self) -> None:
        """Cache ``2 zeta(K) w0`` for every device."""
        for i, s in enumerate(self.switchers):
            zeta = self.zeta0 * (1.0 - s.k_current / self.k_crit)
            self._damping[i] = 2.0 * zeta * self.omega0

    def initial_state(self) -> List[float]:
        return [0.0] * (2 * self.n)

    def derivatives(self, t: float, x: Sequence[float]) -> List[float]:
        n = self.n
        e = x[:n]
        de = x[n:]
        c = self.coupling
        stiffness = self.omega0 * self.omega0 + c * n
        drive = c * sum(e)
        g = self.gamma
        acc = [
            drive - d * r - stiffness * p - g * r * r * r
            for p, r, d in zip(e, de, self._damping)
        ]
        return de + acc

    def solve_algebraic(self, t: float, x: Sequence[float]) -> None:
        pass

    def control(self, k: int, t: float, x: List[float], log: EventLog) -> List[float]:
        n = self.n
        if k == self.kick_step:
            x = x[:n] + [v + self.kick for v in x[n:]]
            if self.arm_mode == "disturbance":
                for s in self.switchers:
                    s.teo.arm(t)
        for i, s in enumerate(self.switchers):
            s.teo.update(x[n + i])

        if self.detectors is None or k % self.det_every != 0:
            return x
        for i, (s, det) in enumerate(zip(self.switchers, self.detectors)):
            out = det.step(self.v_ref + x[i])
            log_detection(log, t, s.id, out, self.log_evals)
            if out.flag_rising_edge and self.first_flag_time is None:
                self.first_flag_time = t
                if self.arm_mode == "flag":
                    for other in self.switchers:
                        other.teo.arm(t)

        changed = False
        for i, (s, det) in enumerate(zip(self.switchers, self.detectors)):
            if not det.flag or t < self.next_decision[i] - 1e-9:
                continue
            if not s.teo.armed or t <= s.teo.t_start:
                continue
            self.next_decision[i] = t + s.ctrl_interval
            alpha = s.teo.impact_angle(t)
            log.append(t, s.id, "TEO_SNAPSHOT", prev=s.teo.cumulative, value=alpha)
            if not self.mitigation:
                continue
            before = s.k_current
            avr_gain_decision(s, alpha, self.streams[i].uniform_open())
            if s.k_current != before:
                log.append(t, s.id, "GAIN_SWITCH", prev=before, value=s.k_current)
                changed = True
        if changed:
            self._refresh_damping()
        return x

    def observe(self, t: float, x: Sequence[float]) -> List[float]:
        n = self.n
        full = (
            [self.v_ref + x[i] for i in range(n)]
            + [s.k_current for s in self.switchers]
            + [s.teo.cumulative for s in self.switchers]
        )
        return [full[i] for i in self._obs_idx]

    def summary_extras(self) -> Dict[str, Any]:
        return {
            "initial_gains": {s.id: s.k_init for s in self.switchers},
            "final_gains": {s.id: s.k_current for s in self.switchers},
            "first_flag_s": self.first_flag_time,
        }


def build_avr_limit_cycle(params: Mapping[str, Any]) -> AvrLimitCycleModel:
    return AvrLimitCycleModel(params)
