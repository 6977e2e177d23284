"""Device models and their local mitigation rules.

* DFR units switch on or off at random with a probability tied to the
  local frequency deviation; mitigation shrinks that probability.
* ULTCs move their tap one step at a time outside a voltage deadband,
  with a minimum spacing between moves; mitigation freezes the tap.
* The exponential-recovery load restores its power slowly after a
  voltage change.
* The AVR gain switcher drops to a safe gain with a probability equal to
  the device's TEO impact angle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

from .errors import ConfigInvalid
from .teo import TeoTracker


# ---------------------------------------------------------------------------
# Discrete flexible resources
# ---------------------------------------------------------------------------


@dataclass
class DfrUnit:
    """One on/off flexible load with stochastic frequency response."""

    id: str
    p_step: float = 0.01
    beta_init: float = 1.0
    mitigation_scale: float = 0.3
    omega_threshold: float = 2.75e-4
    ctrl_interval: float = 0.1
    release_hold: float = 30.0
    kappa: int = 0
    beta: float = field(default=None)
    release_at: Optional[float] = None

    def __post_init__(self):
        if self.beta is None:
            self.beta = self.beta_init
        if self.beta_init < 0 or self.beta < 0:
            raise ConfigInvalid(f"{self.id}: beta must be >= 0")
        if not self.omega_threshold > 0:
            raise ConfigInvalid(f"{self.id}: omega_threshold must be positive")
        if not 0 <= self.mitigation_scale <= 1:
            raise ConfigInvalid(f"{self.id}: mitigation_scale must lie in [0, 1]")
        if self.kappa not in (0, 1):
            raise ConfigInvalid(f"{self.id}: kappa must be 0 or 1")

    @property
    def power(self) -> float:
        return self.kappa * self.p_step

    @property
    def mitigated(self) -> bool:
        return self.beta != self.beta_init


def dfr_activation_signal(delta_omega: float, omega_threshold: float) -> float:
    """Map a frequency deviation onto a switch-on probability in [0, 1]."""
    if not omega_threshold > 0:
        raise ValueError(f"omega_threshold must be positive, got {omega_threshold}")
    u = (delta_omega + omega_threshold) / (2.0 * omega_threshold)
    return min(max(u, 0.0), 1.0)


def dfr_switch(unit: DfrUnit, u: float, x: float) -> int:
    """New on/off state for a uniform draw ``x``: on iff ``x <= beta*u``."""
    return 1 if x <= unit.beta * u else 0


def dfr_mitigate(unit: DfrUnit) -> DfrUnit:
    """Scale the modulation factor once: ``beta = a * beta_init``.

    The scaling is relative to ``beta_init``, so repeated triggers never
    compound.  Any pending release is cancelled.
    """
    unit.beta = unit.mitigation_scale * unit.beta_init
    unit.release_at = None
    return unit


def dfr_schedule_release(unit: DfrUnit, t_now: float) -> None:
    """Start the hold timer after the unit's flag has dropped."""
    if unit.mitigated:
        unit.release_at = t_now + unit.release_hold


def dfr_try_release(unit: DfrUnit, t_now: float, flag: bool) -> bool:
    """Restore ``beta_init`` once the hold has expired with the flag still down."""
    if unit.release_at is None or flag or t_now < unit.release_at - 1e-9:
        return False
    unit.beta = unit.beta_init
    unit.release_at = None
    return True


def dfr_aggregate_power(units: Iterable[DfrUnit]) -> float:
    """Total power drawn by the units that are currently on."""
    return sum(u.kappa * u.p_step for u in units)


def cap_active_units(kappas: Sequence[int], max_fraction: float) -> list:
    """Switch off the highest-index units beyond ``max_fraction`` of the population.

    Stand-in for a central coordinator that never lets more than a fixed
    share of the population run at once.
    """
    limit = int(max_fraction * len(kappas) + 1e-9)
    out = list(kappas)
    on = 0
    for i, k in enumerate(out):
        if k:
            on += 1
            if on > limit:
                out[i] = 0
    return out


# ---------------------------------------------------------------------------
# Under-load tap changers
# ---------------------------------------------------------------------------


@dataclass
class UltcState:
    """Tap changer regulating one downstream bus voltage."""

    id: str
    tap: float = 1.0
    step: float = 0.02
    m_min: float = 0.8
    m_max: float = 1.2
    v_min: float = 0.99
    v_max: float = 1.01
    delay: float = 53.0
    next_allowed_time: float = 0.0
    blocked: bool = False
    persistence_M: int = 4

    def __post_init__(self):
        if not self.m_min <= self.tap <= self.m_max:
            raise ConfigInvalid(f"{self.id}: tap {self.tap} outside [{self.m_min}, {self.m_max}]")
        if not self.v_min < self.v_max:
            raise ConfigInvalid(f"{self.id}: v_min must be below v_max")
        if not self.delay > 0:
            raise ConfigInvalid(f"{self.id}: delay must be positive")
        if not self.step > 0:
            raise ConfigInvalid(f"{self.id}: tap step must be positive")


def ultc_step(state: UltcState, v: float, t_now: float) -> bool:
    """Apply at most one tap move; return True when the tap changed.

    The delay is a minimum spacing between moves: the first move after a
    violation begins is immediate if the previous move is old enough.
    """
    if state.blocked or t_now < state.next_allowed_time - 1e-9:
        return False
    if v > state.v_max:
        new_tap = min(state.tap + state.step, state.m_max)
    elif v < state.v_min:
        new_tap = max(state.tap - state.step, state.m_min)
    else:
        return False
    if new_tap == state.tap:
        return False
    state.tap = new_tap
    state.next_allowed_time = t_now + state.delay
    return True


def ultc_block(state: UltcState) -> UltcState:
    """Freeze the tap changer.  Blocking twice has no further effect."""
    state.blocked = True
    return state


# ---------------------------------------------------------------------------
# Exponential-recovery load
# ---------------------------------------------------------------------------

LOAD_SIGN_CONVENTIONS = ("subtractive", "additive")


@dataclass
class ExpRecoveryLoad:
    """Dynamic load whose power recovers with time constants ``T_p``, ``T_q``.

    Steady-state demand is ``p0``/``q0``; transient demand is ``p0*v^2`` and
    ``q0*v``.  ``sign_convention="subtractive"`` consumes ``p_t(v) - x_p`` while
    ``"additive"`` consumes ``p_t(v) + x_p``.
    """

    p0: float = 2.0
    q0: float = 0.5
    T_p: float = 10.0
    T_q: float = 5.0
    x_p: float = 0.0
    x_q: float = 0.0
    sign_convention: str = "subtractive"

    def __post_init__(self):
        if not (self.T_p > 0 and self.T_q > 0):
            raise ConfigInvalid("load time constants must be positive")
        if self.sign_convention not in LOAD_SIGN_CONVENTIONS:
            raise ConfigInvalid(
                f"load sign convention must be one of {LOAD_SIGN_CONVENTIONS}, "
                f"got {self.sign_convention!r}"
            )

    def powers(self, v: float, x_p: float, x_q: float) -> Tuple[float, float]:
        """Consumed (p, q) at voltage ``v`` for the given recovery states."""
        sign = -1.0 if self.sign_convention == "subtractive" else 1.0
        return self.p0 * v * v + sign * x_p, self.q0 * v + sign * x_q

    def derivatives(self, v: float, x_p: float, x_q: float) -> Tuple[float, float]:
        dx_p = (self.p0 - self.p0 * v * v - x_p) / self.T_p
        dx_q = (self.q0 - self.q0 * v - x_q) / self.T_q
        return dx_p, dx_q


def exp_load_derivatives(
    state: ExpRecoveryLoad, v: float
) -> Tuple[float, float, float, float]:
    """Return ``(dx_p/dt, dx_q/dt, p3, q3)`` at voltage ``v`` for the stored states."""
    if not v > 0:
        raise ValueError(f"voltage must be positive, got {v}")
    dx_p, dx_q = state.derivatives(v, state.x_p, state.x_q)
    p3, q3 = state.powers(v, state.x_p, state.x_q)
    return dx_p, dx_q, p3, q3


# ---------------------------------------------------------------------------
# AVR gain switcher
# ---------------------------------------------------------------------------


@dataclass
class AvrGainSwitcher:
    """Chooses between the initial and the safe regulator gain."""

    id: str
    k_init: float
    k_safe: float
    ctrl_interval: float = 5.0
    latch: bool = True
    teo: TeoTracker = field(default_factory=TeoTracker)
    k_current: float = field(default=None)

    def __post_init__(self):
        if not 0 < self.k_safe < self.k_init:
            raise ConfigInvalid(f"{self.id}: need 0 < k_safe < k_init")
        if self.k_current is None:
            self.k_current = self.k_init

    @property
    def switched(self) -> bool:
        return self.k_current == self.k_safe


def avr_gain_decision(switcher: AvrGainSwitcher, alpha_tilde: float, x: float) -> float:
    """Pick ``k_safe`` when ``x <= alpha_tilde``, otherwise ``k_init``.

    With ``latch`` set, a device that has already dropped to ``k_safe``
    stays there.
    """
    if switcher.latch and switcher.switched:
        return switcher.k_current
    switcher.k_current = switcher.k_safe if x <= alpha_tilde else switcher.k_init
    return switcher.k_current
