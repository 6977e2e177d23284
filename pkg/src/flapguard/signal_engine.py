"""Windowed statistics and normalized biased sample autocorrelation.

The functions here are pure: they take arrays or a :class:`SampleWindow`
and return new values without touching shared state.  The detector builds
on them to compute the peak autocorrelation ``r*`` over a lag band.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateWindow,
    EmptyLagBand,
    InvalidBand,
    LagOutOfRange,
    WindowNotFull,
)

#: Relative slack used when turning period bounds into integer lags, so that
#: ratios such as 1.1 / 0.1 = 11.000000000000002 land on the intended lag.
_LAG_ROUNDING_SLACK = 1e-9

DEFAULT_SIGMA_FLOOR = 1e-9


class SampleWindow:
    """Fixed-capacity chronological buffer of equally spaced samples.

    Once the buffer is full, pushing a new sample evicts the oldest one.
    """

    def __init__(self, capacity: int, dt: float):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.capacity = int(capacity)
        self.dt = float(dt)
        self._samples: deque = deque(maxlen=self.capacity)

    def push(self, value: float) -> None:
        self._samples.append(float(value))

    def extend(self, values: Iterable[float]) -> None:
        for v in values:
            self.push(v)

    def clear(self) -> None:
        self._samples.clear()

    @property
    def is_full(self) -> bool:
        return len(self._samples) == self.capacity

    def values(self) -> np.ndarray:
        """Return the samples, oldest first, as a new float array."""
        return np.fromiter(self._samples, dtype=float, count=len(self._samples))

    def __len__(self) -> int:
        return len(self._samples)

    def __repr__(self) -> str:
        return f"SampleWindow(capacity={self.capacity}, dt={self.dt}, len={len(self)})"


@dataclass(frozen=True)
class WindowStats:
    """Population mean and standard deviation of a window."""

    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class AcfResult:
    """Normalized autocorrelation over lags ``0..k_max`` and its band peak."""

    rho: np.ndarray
    k_range: Tuple[int, int]
    r_star: float
    k_star: int
    degenerate: bool = False


def stats_of(values: Sequence[float]) -> WindowStats:
    """Population statistics (divide by N) of an arbitrary sequence."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise WindowNotFull("cannot compute statistics of an empty sequence")
    return WindowStats(mean=float(arr.mean()), std=float(arr.std()), n=int(arr.size))


def window_stats(window: SampleWindow) -> WindowStats:
    """Population mean and standard deviation of a full window."""
    if not window.is_full:
        raise WindowNotFull(
            f"window holds {len(window)} of {window.capacity} samples"
        )
    return stats_of(window.values())


def normalize_values(
    values: Sequence[float], stats: WindowStats, sigma_floor: float = DEFAULT_SIGMA_FLOOR
) -> Tuple[np.ndarray, bool]:
    """Remove the mean and scale to unit variance.

    Returns ``(x, degenerate)``.  A window whose standard deviation falls
    below ``sigma_floor`` carries no oscillation; it maps to all zeros and
    ``degenerate`` is True.
    """
    arr = np.asarray(values, dtype=float)
    if stats.std < sigma_floor:
        return np.zeros_like(arr), True
    return (arr - stats.mean) / stats.std, False


def normalize_window(
    window: SampleWindow, stats: WindowStats, sigma_floor: float = DEFAULT_SIGMA_FLOOR
) -> Tuple[np.ndarray, bool]:
    """Normalize a full :class:`SampleWindow` using precomputed stats."""
    if not window.is_full:
        raise WindowNotFull(
            f"window holds {len(window)} of {window.capacity} samples"
        )
    return normalize_values(window.values(), stats, sigma_floor)


def biased_acf(x: Sequence[float], max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation ``R[k] = (1/N) sum x[n] x[n+k]``.

    Every lag is divided by the full length ``N``, which keeps the
    normalized coefficients inside [-1, 1].
    """
    arr = np.asarray(x, dtype=float)
    n = arr.size
    if max_lag < 0 or max_lag >= n:
        raise LagOutOfRange(f"max_lag={max_lag} must satisfy 0 <= max_lag < N={n}")
    out = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        out[k] = np.dot(arr[: n - k], arr[k:]) / n
    return out


def lagged_acf(x: Sequence[float], n_lead: int, max_lag: int) -> np.ndarray:
    """Autocorrelation of a leading segment against full-length lagged copies.

    ``R[k] = (1/n_lead) sum_{n < n_lead} x[n] x[n+k]``.  Every lag uses the
    same number of products, so a steady oscillation is not penalized by
    the shrinking overlap of the biased estimator.  ``x`` must hold at
    least ``n_lead + max_lag`` samples.
    """
    arr = np.asarray(x, dtype=float)
    if n_lead < 1:
        raise LagOutOfRange(f"n_lead must be >= 1, got {n_lead}")
    if max_lag < 0 or arr.size < n_lead + max_lag:
        raise LagOutOfRange(
            f"need {n_lead + max_lag} samples for lag {max_lag}, have {arr.size}"
        )
    lead = arr[:n_lead]
    out = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        out[k] = np.dot(lead, arr[k : k + n_lead]) / n_lead
    return out


def normalized_acf(rhat: Sequence[float]) -> np.ndarray:
    """Divide an ACF by its zero-lag value so that ``rho[0] == 1``."""
    arr = np.asarray(rhat, dtype=float)
    if arr.size == 0 or not arr[0] > 0:
        raise DegenerateWindow("zero-lag autocorrelation must be positive")
    rho = arr / arr[0]
    rho[0] = 1.0
    return rho


def lag_bounds(
    t_min: float, t_max: float, dt: float, n_window: Optional[int] = None
) -> Tuple[int, int]:
    """Convert period bounds in seconds into an inclusive integer lag band.

    ``k_min = ceil(t_min/dt)`` and ``k_max = floor(t_max/dt)``.  When
    ``n_window`` is given, the band must also fit inside the window.
    """
    if not (dt > 0 and 0 < t_min <= t_max):
        raise InvalidBand(f"need 0 < t_min <= t_max and dt > 0, got {t_min}, {t_max}, {dt}")
    lo = t_min / dt
    hi = t_max / dt
    k_min = max(1, math.ceil(lo - _LAG_ROUNDING_SLACK * max(1.0, lo)))
    k_max = math.floor(hi + _LAG_ROUNDING_SLACK * max(1.0, hi))
    if k_min > k_max:
        raise EmptyLagBand(f"no integer lag between {lo:g} and {hi:g}")
    if n_window is not None and k_max >= n_window:
        raise InvalidBand(f"k_max={k_max} does not fit a window of {n_window} samples")
    return k_min, k_max


def band_peak(rho: Sequence[float], k_min: int, k_max: int) -> Tuple[float, int]:
    """Largest ``|rho[k]|`` over ``k_min..k_max``; ties go to the smallest lag."""
    arr = np.asarray(rho, dtype=float)
    if k_min > k_max:
        raise EmptyLagBand(f"empty band [{k_min}, {k_max}]")
    if k_min < 0 or k_max >= arr.size:
        raise EmptyLagBand(f"band [{k_min}, {k_max}] outside rho of length {arr.size}")
    band = np.abs(arr[k_min : k_max + 1])
    idx = int(np.argmax(band))
    return float(band[idx]), k_min + idx


def analyze_window(
    values: Sequence[float],
    k_min: int,
    k_max: int,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
    n_lead: Optional[int] = None,
) -> AcfResult:
    """Normalize a block of samples and find its autocorrelation band peak.

    With ``n_lead=None`` the whole block is the analysis window and the
    biased estimator is used.  With ``n_lead`` set, the block must hold
    ``n_lead + k_max`` samples and :func:`lagged_acf` is used instead.
    Degenerate blocks yield ``r_star = 0`` at ``k_star = k_min``.
    """
    arr = np.asarray(values, dtype=float)
    stats = stats_of(arr)
    x, degenerate = normalize_values(arr, stats, sigma_floor)
    if degenerate:
        return AcfResult(np.zeros(k_max + 1), (k_min, k_max), 0.0, k_min, True)
    if n_lead is None:
        rhat = biased_acf(x, k_max)
    else:
        rhat = lagged_acf(x, n_lead, k_max)
    if not rhat[0] > 0:
        return AcfResult(np.zeros(k_max + 1), (k_min, k_max), 0.0, k_min, True)
    rho = normalized_acf(rhat)
    r_star, k_star = band_peak(rho, k_min, k_max)
    return AcfResult(rho, (k_min, k_max), r_star, k_star, False)
