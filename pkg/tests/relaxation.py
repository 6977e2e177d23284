"""Minimal engine model: exponential-recovery load with the voltage held fixed."""

import math
from typing import List, Sequence

from flapguard.devices import ExpRecoveryLoad


class HeldVoltageLoad:
    kind = "held_voltage_load"
    observables = ("x_p", "x_q")

    def __init__(self, v: float, dt: float, t_end: float, x_p0: float = 0.0, x_q0: float = 0.0):
        self.v = v
        self.dt_sim = dt
        self.t_end = t_end
        self.load = ExpRecoveryLoad(x_p=x_p0, x_q=x_q0)

    def initial_state(self) -> List[float]:
        return [self.load.x_p, self.load.x_q]

    def derivatives(self, t: float, x: Sequence[float]) -> List[float]:
        return list(self.load.derivatives(self.v, x[0], x[1]))

    def solve_algebraic(self, t, x) -> None:
        pass

    def control(self, k, t, x, log):
        return x

    def observe(self, t, x):
        return list(x)

    def exact_x_p(self, t: float) -> float:
        load = self.load
        target = load.p0 - load.p0 * self.v * self.v
        return target + (load.x_p - target) * math.exp(-t / load.T_p)
