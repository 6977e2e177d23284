"""Fixed-step hybrid simulator shared by all scenarios.

A scenario model owns its devices and detectors.  The engine drives time:
at each step it asks the model to solve its algebraic relations, run the
discrete logic due at that instant, and report its observables, and then
advances the continuous states with classical fourth-order Runge-Kutta.
Continuous states are plain lists of floats; for the handful of states
in these testbeds that is several times faster than small numpy arrays.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .errors import ConfigInvalid, NumericalFailure, UnknownObservable

EVENT_KINDS = (
    "DFR_SWITCH",
    "TAP",
    "BLOCK",
    "FLAG_UP",
    "FLAG_DOWN",
    "EVAL",
    "MITIGATE",
    "RELEASE",
    "GAIN_SWITCH",
    "TEO_SNAPSHOT",
)

#: Numeric payload columns carried by every event, in CSV order.
PAYLOAD_FIELDS = ("r_star", "k_star", "counter", "prev", "value")


@dataclass(frozen=True)
class Event:
    t: float
    device_id: str
    kind: str
    r_star: Optional[float] = None
    k_star: Optional[int] = None
    counter: Optional[int] = None
    prev: Optional[float] = None
    value: Optional[float] = None


class EventLog:
    """Time-ordered record of device and detector events."""

    def __init__(self):
        self._events: List[Event] = []

    def append(self, t: float, device_id: str, kind: str, **payload) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        if self._events and t < self._events[-1].t - 1e-12:
            raise ValueError(f"event at t={t} precedes the last logged event")
        event = Event(t, device_id, kind, **payload)
        self._events.append(event)
        return event

    def finalize(self) -> None:
        """Order simultaneous events by device id (stable within a device)."""
        self._events.sort(key=lambda e: (e.t, e.device_id))

    def of_kind(self, kind: str, device_id: Optional[str] = None) -> List[Event]:
        return [
            e for e in self._events
            if e.kind == kind and (device_id is None or e.device_id == device_id)
        ]

    def count(self, kind: str, device_id: Optional[str] = None) -> int:
        return len(self.of_kind(kind, device_id))

    def first(self, kind: str, device_id: Optional[str] = None) -> Optional[Event]:
        for e in self._events:
            if e.kind == kind and (device_id is None or e.device_id == device_id):
                return e
        return None

    def __iter__(self):
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)


def _device_key(device_id: str) -> int:
    return int.from_bytes(hashlib.sha256(device_id.encode("utf-8")).digest()[:8], "little")


class DeviceStream:
    """Random substream of one device.

    Draws are produced in blocks, but the n-th uniform depends only on
    (seed, device id, n).
    """

    _BLOCK = 512

    def __init__(self, seed: int, device_id: str):
        seq = np.random.SeedSequence([int(seed) & (2**64 - 1), _device_key(device_id)])
        self._gen = np.random.Generator(np.random.Philox(seq))
        self._buf: List[float] = []
        self._pos = 0
        self.draws = 0

    def uniform(self) -> float:
        """Next draw from U[0, 1)."""
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(self._BLOCK).tolist()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        self.draws += 1
        return x

    def uniform_open(self) -> float:
        """Next draw from the open interval (0, 1)."""
        x = self.uniform()
        while x == 0.0:
            x = self.uniform()
        return x


class RngStreams:
    """Independent per-device random streams derived from one root seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, DeviceStream] = {}

    def stream(self, device_id: str) -> DeviceStream:
        if device_id not in self._streams:
            self._streams[device_id] = DeviceStream(self.seed, device_id)
        return self._streams[device_id]

    def gaussian(self, device_id: str) -> np.random.Generator:
        """Separate generator for measurement noise of one device."""
        seq = np.random.SeedSequence(
            [self.seed & (2**64 - 1), _device_key(device_id), _device_key("noise")]
        )
        return np.random.Generator(np.random.Philox(seq))


class Model(Protocol):
    """What a scenario model must provide to be driven by :func:`simulate`."""

    kind: str
    dt_sim: float
    t_end: float
    observables: Sequence[str]

    def initial_state(self) -> List[float]: ...

    def derivatives(self, t: float, x: Sequence[float]) -> Sequence[float]: ...

    def solve_algebraic(self, t: float, x: Sequence[float]) -> None: ...

    def control(self, k: int, t: float, x: List[float], log: EventLog) -> List[float]: ...

    def observe(self, t: float, x: Sequence[float]) -> Sequence[float]: ...


def rk4_step(
    f: Callable[[float, Sequence[float]], Sequence[float]],
    t: float,
    x: Sequence[float],
    dt: float,
) -> List[float]:
    """One classical fourth-order Runge-Kutta step on a list of floats."""
    h2 = 0.5 * dt
    k1 = f(t, x)
    k2 = f(t + h2, [a + h2 * b for a, b in zip(x, k1)])
    k3 = f(t + h2, [a + h2 * b for a, b in zip(x, k2)])
    k4 = f(t + dt, [a + dt * b for a, b in zip(x, k3)])
    h6 = dt / 6.0
    return [a + h6 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(x, k1, k2, k3, k4)]


def steps_per(interval: float, dt: float, what: str = "interval") -> int:
    """Number of simulation steps in ``interval``; it must be a whole multiple of dt."""
    n = interval / dt
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-6 * max(1.0, n):
        raise ConfigInvalid(f"{what} of {interval} s is not a positive multiple of dt_sim={dt}")
    return k


@dataclass
class RunResult:
    """Trajectories, events and summary of one simulation run."""

    kind: str
    times: np.ndarray
    data: np.ndarray
    observables: Tuple[str, ...]
    events: EventLog
    summary: Dict = field(default_factory=dict)
    model: object = None

    def observe(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        """``(t, values)`` of a recorded observable."""
        try:
            col = self.observables.index(name)
        except ValueError:
            raise UnknownObservable(
                f"{name!r} is not recorded; available: {', '.join(self.observables)}"
            ) from None
        return self.times, self.data[:, col]


def observe(result: RunResult, name: str) -> Tuple[np.ndarray, np.ndarray]:
    """Functional form of :meth:`RunResult.observe`."""
    return result.observe(name)


def simulate(model: Model) -> RunResult:
    """Run a model from t=0 to its ``t_end`` with fixed step ``dt_sim``.

    Per step: algebraic solve, discrete logic (devices, detectors and
    mitigation, all inside ``model.control``), recording, then one RK4
    step.  The final instant is recorded without running discrete logic,
    so a zero-length run logs no events.
    """
    dt = model.dt_sim
    if not dt > 0:
        raise ConfigInvalid(f"dt_sim must be positive, got {dt}")
    if model.t_end < 0:
        raise ConfigInvalid(f"t_end must be >= 0, got {model.t_end}")
    n_steps = int(round(model.t_end / dt))
    if abs(n_steps * dt - model.t_end) > 1e-6 * max(1.0, model.t_end):
        raise ConfigInvalid(f"t_end={model.t_end} is not a multiple of dt_sim={dt}")

    observables = tuple(model.observables)
    times = np.round(np.arange(n_steps + 1) * dt, 12)
    data = np.empty((n_steps + 1, len(observables)))
    log = EventLog()
    x = list(model.initial_state())
    derivatives = model.derivatives
    isfinite = math.isfinite
    dt_digits = 12
    for k in range(n_steps + 1):
        t = round(k * dt, dt_digits)
        model.solve_algebraic(t, x)
        if k < n_steps:
            x = model.control(k, t, x, log)
        data[k] = model.observe(t, x)
        if k == n_steps:
            break
        x = rk4_step(derivatives, t, x, dt)
        if not isfinite(sum(x)):
            raise NumericalFailure(f"state became non-finite at t={t + dt:g}")
    log.finalize()
    result = RunResult(model.kind, times, data, observables, log, model=model)
    result.summary = summarize(result)
    extra = getattr(model, "summary_extras", None)
    if extra is not None:
        result.summary.update(extra())
    return result


def summarize(result: RunResult, tail_fraction: float = 0.1) -> Dict:
    """Flag counts, first detection times and tail statistics of a run."""
    device_ids = sorted({e.device_id for e in result.events})
    flags = {d: result.events.count("FLAG_UP", d) for d in device_ids}
    first = {}
    for d in device_ids:
        e = result.events.first("FLAG_UP", d)
        if e is not None:
            first[d] = e.t
    kinds = {k: result.events.count(k) for k in EVENT_KINDS}
    n = len(result.times)
    start = min(n - 1, int(math.floor((1.0 - tail_fraction) * (n - 1))))
    tail = {}
    for i, name in enumerate(result.observables):
        seg = result.data[start:, i]
        tail[name] = {
            "mean": float(seg.mean()),
            "std": float(seg.std()),
            "min": float(seg.min()),
            "max": float(seg.max()),
        }
    return {
        "scenario": result.kind,
        "t_end": float(result.times[-1]) if n else 0.0,
        "flag_counts": {d: c for d, c in flags.items() if c},
        "first_detection_s": first,
        "event_counts": {k: c for k, c in kinds.items() if c},
        "tail_window_s": float(result.times[-1] - result.times[start]) if n else 0.0,
        "tail_stats": tail,
    }


def log_detection(
    log: EventLog, t: float, device_id: str, out, record_eval: bool = True
) -> None:
    """Append EVAL / FLAG_UP / FLAG_DOWN events for one detector output."""
    if not out.evaluated:
        return
    payload = dict(r_star=out.r_star, k_star=out.k_star, counter=out.counter)
    if record_eval:
        log.append(t, device_id, "EVAL", **payload)
    if out.flag_rising_edge:
        log.append(t, device_id, "FLAG_UP", **payload)
    if out.flag_falling_edge:
        log.append(t, device_id, "FLAG_DOWN", **payload)


def run(config) -> RunResult:
    """Build the scenario described by ``config`` and simulate it.

    ``config`` is a :class:`flapguard.config.ScenarioConfig` (or anything
    with ``kind``, ``params`` and ``seed``).
    """
    from .scenarios import build_model

    return simulate(build_model(config))

