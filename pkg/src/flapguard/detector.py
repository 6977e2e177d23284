"""Persistence state machine that turns a sample stream into a flapping flag.

Every ``N_s`` samples (once enough history is buffered) the detector
computes the peak normalized autocorrelation ``r*`` over the configured
lag band.  An evaluation qualifies when ``r*`` exceeds the threshold and
has not decayed by more than ``epsilon`` since the previous evaluation.
``M`` consecutive qualifying evaluations raise the flag; the first
non-qualifying evaluation drops it again.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigInvalid, EmptyLagBand, InvalidBand, NonFiniteSample
from .signal_engine import DEFAULT_SIGMA_FLOOR, AcfResult, analyze_window, lag_bounds


@dataclass(frozen=True)
class DetectorConfig:
    """Detector parameters, in seconds unless noted otherwise.

    ``extended_buffer`` keeps ``k_max`` extra samples behind the analysis
    window so that every lag is averaged over a full window of products.
    Setting it to False restores the plain biased estimator on a window of
    exactly ``N_w`` samples.
    """

    dt: float = 0.1
    window_seconds: float = 12.0
    shift_seconds: float = 3.0
    t_min: float = 0.9
    t_max: float = 1.1
    r_threshold: float = 0.9
    epsilon: float = 1e-3
    persistence: int = 4
    sigma_floor: float = DEFAULT_SIGMA_FLOOR
    extended_buffer: bool = True
    _derived: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigInvalid(f"detector dt must be positive, got {self.dt}")
        if not 0 < self.r_threshold < 1:
            raise ConfigInvalid(f"r_threshold must lie in (0, 1), got {self.r_threshold}")
        if self.epsilon < 0:
            raise ConfigInvalid(f"epsilon must be >= 0, got {self.epsilon}")
        if int(self.persistence) != self.persistence or self.persistence < 1:
            raise ConfigInvalid(f"persistence must be an integer >= 1, got {self.persistence}")
        if self.sigma_floor < 0:
            raise ConfigInvalid(f"sigma_floor must be >= 0, got {self.sigma_floor}")
        n_window = int(round(self.window_seconds / self.dt))
        n_shift = int(round(self.shift_seconds / self.dt))
        if n_shift < 1:
            raise ConfigInvalid(f"shift of {self.shift_seconds} s is shorter than one sample")
        try:
            k_min, k_max = lag_bounds(self.t_min, self.t_max, self.dt, n_window)
        except (EmptyLagBand, InvalidBand) as exc:
            raise ConfigInvalid(str(exc)) from exc
        if n_window < 2 * k_max:
            raise ConfigInvalid(
                f"window of {n_window} samples must span two periods (2*k_max={2 * k_max})"
            )
        buffer_length = n_window + (k_max if self.extended_buffer else 0)
        # frozen dataclass: derived integers are cached once at construction
        object.__setattr__(self, "_derived", (n_window, n_shift, k_min, k_max, buffer_length))

    @property
    def n_window(self) -> int:
        return self._derived[0]

    @property
    def n_shift(self) -> int:
        return self._derived[1]

    @property
    def lag_band(self) -> tuple:
        return self._derived[2], self._derived[3]

    @property
    def k_min(self) -> int:
        return self._derived[2]

    @property
    def k_max(self) -> int:
        return self._derived[3]

    @property
    def buffer_length(self) -> int:
        """Samples held before the first evaluation can run."""
        return self._derived[4]


@dataclass
class DetectorState:
    """Mutable detector state for one monitored signal."""

    buffer: deque
    samples_seen: int = 0
    counter: int = 0
    prev_r_star: Optional[float] = None
    flag: bool = False
    last_eval: Optional[AcfResult] = None
    idle: Optional["DetectionOutput"] = None

    @classmethod
    def fresh(cls, config: DetectorConfig) -> "DetectorState":
        return cls(buffer=deque(maxlen=config.buffer_length))


@dataclass(frozen=True)
class DetectionOutput:
    """What one sample did to the detector."""

    evaluated: bool
    r_star: Optional[float]
    k_star: Optional[int]
    counter: int
    flag: bool
    flag_rising_edge: bool = False
    flag_falling_edge: bool = False


def detector_step(state: DetectorState, config: DetectorConfig, sample: float) -> DetectionOutput:
    """Push one sample and evaluate on shift boundaries with a full buffer."""
    if not math.isfinite(sample):
        raise NonFiniteSample(f"detector received a non-finite sample: {sample!r}")
    state.buffer.append(sample)
    state.samples_seen += 1
    length = config.buffer_length
    due = state.samples_seen >= length and (state.samples_seen - length) % config.n_shift == 0
    if not due:
        if state.idle is None:
            state.idle = DetectionOutput(False, None, None, state.counter, state.flag)
        return state.idle

    n_lead = config.n_window if config.extended_buffer else None
    result = analyze_window(
        np.fromiter(state.buffer, dtype=float, count=length),
        config.k_min,
        config.k_max,
        config.sigma_floor,
        n_lead=n_lead,
    )
    r_star = result.r_star
    not_decaying = state.prev_r_star is None or r_star >= state.prev_r_star - config.epsilon
    if r_star > config.r_threshold and not_decaying:
        state.counter += 1
    else:
        state.counter = 0
    state.prev_r_star = r_star
    state.last_eval = result

    was_flagged = state.flag
    state.flag = state.counter >= config.persistence
    state.idle = None
    return DetectionOutput(
        True,
        r_star,
        result.k_star,
        state.counter,
        state.flag,
        flag_rising_edge=state.flag and not was_flagged,
        flag_falling_edge=was_flagged and not state.flag,
    )


def detector_reset(state: DetectorState) -> DetectorState:
    """Forget all history: empty buffer, zero counter, flag down."""
    state.buffer.clear()
    state.samples_seen = 0
    state.counter = 0
    state.prev_r_star = None
    state.flag = False
    state.last_eval = None
    state.idle = None
    return state


class Detector:
    """Convenience wrapper bundling a config with its evolving state."""

    def __init__(self, config: DetectorConfig):
        self.config = config
        self.state = DetectorState.fresh(config)

    def step(self, sample: float) -> DetectionOutput:
        return detector_step(self.state, self.config, sample)

    def reset(self) -> None:
        detector_reset(self.state)

    @property
    def flag(self) -> bool:
        return self.state.flag

    @property
    def counter(self) -> int:
        return self.state.counter
