"""Single-bus frequency model with a population of stochastic DFR units.

Plant (per unit on the system base)::

    M  dw/dt   = -D w + p_gen - p_load(t) - (p_dfr - p_ref)
    Tg dp_gen  = -p_gen - w/R + p_agc
       dp_agc  = -Ki w
    Tf dw_m    = w - w_m

``w`` is the bus frequency deviation and ``w_m`` the filtered frequency
the units measure.  Each unit draws ``p_step`` when on; ``p_ref`` is the
expected draw at nominal frequency (half the population on), so the DFRs
only inject their deviation from that expectation.  A load trip at
``disturbance.time`` pushes frequency up, and the units' on/off response
then feeds a sustained ~1 s relay cycle.
"""

from __future__ import annotations

from typing import Any, Dict, List, Mapping, Sequence

from ..detector import Detector
from ..devices import (
    DfrUnit,
    cap_active_units,
    dfr_activation_signal,
    dfr_mitigate,
    dfr_schedule_release,
    dfr_switch,
    dfr_try_release,
)
from ..engine import EventLog, RngStreams, log_detection, steps_per
from ..errors import ConfigInvalid
from .common import detector_defaults, detector_from, require_positive, select_observables

KIND = "dfr_frequency"

DEFAULTS: Dict[str, Any] = {
    "sim.dt": 0.01,
    "sim.t_end": 600.0,
    "sim.seed": 0,
    "mitigation": True,
    "observables": "",
    "plant.inertia": 10.0,
    "plant.inertia_scale": 1.0,
    "plant.damping": 1.0,
    "plant.droop": 0.05,
    "plant.governor_tc": 0.5,
    "plant.secondary_gain": 5.0,
    "plant.measurement_tc": 0.55,
    "disturbance.time": 5.0,
    "disturbance.load_step": -1.1,
    "dfr.count": 20,
    "dfr.p_step": 0.01,
    "dfr.beta_init": 1.0,
    "dfr.mitigation_scale": 0.3,
    "dfr.omega_threshold": 2.75e-4,
    "dfr.ctrl_interval": 0.1,
    "dfr.release_hold": 120.0,
    "dfr.noise_std": 0.0,
    "dfr.centralized_cap": False,
    "dfr.cap_fraction": 0.5,
    "detector.enabled": True,
    "detector.dt": 0.1,
    "log.evals": True,
    "log.switches": True,
}
DEFAULTS.update(
    detector_defaults(
        "detector",
        window_seconds=12.0,
        shift_seconds=3.0,
        t_min=0.9,
        t_max=1.1,
        r_threshold=0.9,
        epsilon=1e-3,
        persistence=4,
        sigma_floor=1e-9,
        extended_buffer=True,
    )
)

OBSERVABLES = ("delta_omega", "omega_meas", "p_dfr", "p_gen", "p_agc", "units_on", "beta_mean")


class DfrFrequencyModel:
    kind = KIND

    def __init__(self, params: Mapping[str, Any]):
        require_positive(
            params,
            "sim.dt",
            "plant.inertia",
            "plant.inertia_scale",
            "plant.droop",
            "plant.governor_tc",
            "plant.measurement_tc",
            "dfr.count",
            "dfr.ctrl_interval",
        )
        if params["plant.damping"] < 0 or params["plant.secondary_gain"] < 0:
            raise ConfigInvalid("plant damping and secondary gain must be >= 0")
        if params["dfr.noise_std"] < 0:
            raise ConfigInvalid("dfr.noise_std must be >= 0")
        if not 0 < params["dfr.cap_fraction"] <= 1:
            raise ConfigInvalid("dfr.cap_fraction must lie in (0, 1]")
        self.dt_sim = float(params["sim.dt"])
        self.t_end = float(params["sim.t_end"])
        self.mitigation = bool(params["mitigation"])
        self.inertia = params["plant.inertia"] * params["plant.inertia_scale"]
        self.damping = params["plant.damping"]
        self.inv_droop = 1.0 / params["plant.droop"]
        self.t_gov = params["plant.governor_tc"]
        self.k_agc = params["plant.secondary_gain"]
        self.t_meas = params["plant.measurement_tc"]
        self.t_dist = params["disturbance.time"]
        self.load_step = params["disturbance.load_step"]
        self.noise_std = params["dfr.noise_std"]
        self.cap = params["dfr.centralized_cap"]
        self.cap_fraction = params["dfr.cap_fraction"]
        self.log_evals = params["log.evals"]
        self.log_switches = params["log.switches"]

        n = int(params["dfr.count"])
        self.units: List[DfrUnit] = [
            DfrUnit(
                id=f"dfr{i + 1:02d}",
                p_step=params["dfr.p_step"],
                beta_init=params["dfr.beta_init"],
                mitigation_scale=params["dfr.mitigation_scale"],
                omega_threshold=params["dfr.omega_threshold"],
                ctrl_interval=params["dfr.ctrl_interval"],
                release_hold=params["dfr.release_hold"],
            )
            for i in range(n)
        ]
        self.p_ref = 0.5 * params["dfr.beta_init"] * sum(u.p_step for u in self.units)
        self.ctrl_every = steps_per(params["dfr.ctrl_interval"], self.dt_sim, "dfr.ctrl_interval")
        self.detectors = None
        if params["detector.enabled"]:
            cfg = detector_from(params, "detector", params["detector.dt"])
            self.det_every = steps_per(cfg.dt, self.dt_sim, "detector.dt")
            if params["dfr.noise_std"] > 0:
                self.detectors = [Detector(cfg) for _ in self.units]
            else:
                # Noise-free units all sample the same filtered frequency, so
                # their detectors would evolve identically; one shared state
                # gives the same outputs at a fraction of the cost.
                shared = Detector(cfg)
                self.detectors = [shared] * len(self.units)
        rng = RngStreams(int(params["sim.seed"]))
        self.streams = [rng.stream(u.id) for u in self.units]
        self.noise = [rng.gaussian(u.id) for u in self.units] if self.noise_std > 0 else None

        self.observables, self._obs_idx = select_observables(params["observables"], OBSERVABLES)
        self.p_dfr = 0.0
        self.p_load = 0.0
        self._units_on = 0.0
        self._beta_mean = params["dfr.beta_init"]

    def initial_state(self) -> List[float]:
        return [0.0, 0.0, 0.0, 0.0]

    def derivatives(self, t: float, x: Sequence[float]) -> List[float]:
        w, p_gen, p_agc, w_m = x
        dw = (-self.damping * w + p_gen - self.p_load - (self.p_dfr - self.p_ref)) / self.inertia
        dp_gen = (-p_gen - self.inv_droop * w + p_agc) / self.t_gov
        dp_agc = -self.k_agc * w
        dw_m = (w - w_m) / self.t_meas
        return [dw, dp_gen, dp_agc, dw_m]

    def solve_algebraic(self, t: float, x: Sequence[float]) -> None:
        self.p_load = self.load_step if t >= self.t_dist - 1e-9 else 0.0

    def _measurements(self, w_m: float) -> List[float]:
        if self.noise is None:
            return [w_m] * len(self.units)
        return [w_m + self.noise_std * g.standard_normal() for g in self.noise]

    def _detector_outputs(self, meas: List[float]) -> list:
        if self.noise is None:
            return [self.detectors[0].step(meas[0])] * len(self.units)
        return [det.step(m) for det, m in zip(self.detectors, meas)]

    def control(self, k: int, t: float, x: List[float], log: EventLog) -> List[float]:
        ctrl_due = k % self.ctrl_every == 0
        det_due = self.detectors is not None and k % self.det_every == 0
        if not (ctrl_due or det_due):
            return x
        meas = self._measurements(x[3])
        units = self.units

        if ctrl_due:
            new = [
                dfr_switch(unit, dfr_activation_signal(m, unit.omega_threshold), s.uniform())
                for unit, m, s in zip(units, meas, self.streams)
            ]
            if self.cap:
                new = cap_active_units(new, self.cap_fraction)
            for unit, kappa in zip(units, new):
                if kappa != unit.kappa:
                    if self.log_switches:
                        log.append(t, unit.id, "DFR_SWITCH", prev=unit.kappa, value=kappa)
                    unit.kappa = kappa
            self.p_dfr = sum(u.kappa * u.p_step for u in units)
            self._units_on = float(sum(u.kappa for u in units))

        if det_due:
            outputs = self._detector_outputs(meas)
            for unit, out in zip(units, outputs):
                if not out.evaluated:
                    continue
                log_detection(log, t, unit.id, out, self.log_evals)
                if not self.mitigation:
                    continue
                if out.flag_rising_edge:
                    before = unit.beta
                    dfr_mitigate(unit)
                    log.append(t, unit.id, "MITIGATE", prev=before, value=unit.beta)
                elif out.flag_falling_edge:
                    dfr_schedule_release(unit, t)
            self._beta_mean = sum(u.beta for u in units) / len(units)

        if ctrl_due and self.mitigation and self.detectors is not None:
            for unit, det in zip(units, self.detectors):
                before = unit.beta
                if dfr_try_release(unit, t, det.flag):
                    log.append(t, unit.id, "RELEASE", prev=before, value=unit.beta)
            self._beta_mean = sum(u.beta for u in units) / len(units)
        return x

    def observe(self, t: float, x: Sequence[float]) -> List[float]:
        full = (x[0], x[3], self.p_dfr, x[1], x[2], self._units_on, self._beta_mean)
        return [full[i] for i in self._obs_idx]


def build_dfr_frequency(params: Mapping[str, Any]) -> DfrFrequencyModel:
    return DfrFrequencyModel(params)
