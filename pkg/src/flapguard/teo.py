"""Teager energy operator and cumulative-energy impact angle.

A :class:`TeoTracker` sums ``Psi[n] = x[n]^2 - x[n+1] x[n-1]`` over a
feature signal from the moment it is armed.  The impact angle is the
angle of the ray from the arming point to the current cumulative value,
normalized to [0, 1] so it can be used directly as a probability.
"""

from __future__ import annotations

import math
from typing import Optional

from .errors import NotArmed


def teo_sample(x_prev: float, x_curr: float, x_next: float) -> float:
    """Teager energy of the middle sample of three consecutive values."""
    return x_curr * x_curr - x_next * x_prev


def impact_angle_from(
    cumulative: float,
    elapsed: float,
    scale: float = 1.0,
    alpha_max: float = 90.0,
) -> float:
    """Normalized angle ``clamp(atan(scale*cumulative/elapsed) / alpha_max, 0, 1)``."""
    if not elapsed > 0:
        raise ValueError(f"elapsed time must be positive, got {elapsed}")
    alpha = math.degrees(math.atan(scale * cumulative / elapsed))
    return min(max(alpha / alpha_max, 0.0), 1.0)


class TeoTracker:
    """Running sum of Teager energy for one device's feature signal."""

    def __init__(self, scale: float = 1.0, alpha_max: float = 90.0):
        if not alpha_max > 0:
            raise ValueError(f"alpha_max must be positive, got {alpha_max}")
        self.scale = float(scale)
        self.alpha_max = float(alpha_max)
        self.cumulative = 0.0
        self.t_start: Optional[float] = None
        self._prev: Optional[float] = None
        self._curr: Optional[float] = None

    @property
    def armed(self) -> bool:
        return self.t_start is not None

    def arm(self, t_now: float) -> None:
        """Start accumulating at ``t_now``, discarding earlier history."""
        self.t_start = float(t_now)
        self.cumulative = 0.0
        self._prev = None
        self._curr = None

    def update(self, x: float) -> None:
        """Feed the next feature sample; ignored until the tracker is armed."""
        if self.t_start is None:
            return
        if self._prev is not None:
            self.cumulative += self._curr * self._curr - x * self._prev
        self._prev = self._curr
        self._curr = x

    def impact_angle(self, t_now: float) -> float:
        """Normalized impact angle in [0, 1] at time ``t_now``."""
        if self.t_start is None:
            raise NotArmed("TEO tracker has not been armed")
        return impact_angle_from(
            self.cumulative, t_now - self.t_start, self.scale, self.alpha_max
        )


def impact_angle(tracker: TeoTracker, t_now: float) -> float:
    """Functional form of :meth:`TeoTracker.impact_angle`."""
    return tracker.impact_angle(t_now)
