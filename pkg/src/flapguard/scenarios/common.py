"""Helpers shared by the scenario builders."""

from __future__ import annotations

from typing import Any, Dict, Mapping, Sequence, Tuple

from ..detector import DetectorConfig
from ..errors import ConfigInvalid

#: Detector keys understood under every ``detector.<name>.`` prefix.
DETECTOR_KEYS = (
    "window_seconds",
    "shift_seconds",
    "t_min",
    "t_max",
    "r_threshold",
    "epsilon",
    "persistence",
    "sigma_floor",
    "extended_buffer",
)


def detector_defaults(prefix: str, **values: Any) -> Dict[str, Any]:
    """Prefix a set of detector parameters with ``prefix``."""
    missing = set(DETECTOR_KEYS) - set(values)
    if missing:
        raise ValueError(f"detector defaults for {prefix} miss {sorted(missing)}")
    return {f"{prefix}.{k}": values[k] for k in DETECTOR_KEYS}


def detector_from(params: Mapping[str, Any], prefix: str, dt: float) -> DetectorConfig:
    """Build a :class:`DetectorConfig` from ``prefix.*`` keys."""
    kwargs = {k: params[f"{prefix}.{k}"] for k in DETECTOR_KEYS}
    try:
        return DetectorConfig(dt=dt, **kwargs)
    except ConfigInvalid as exc:
        raise ConfigInvalid(f"{prefix}: {exc}") from None


def select_observables(requested: str, available: Sequence[str]) -> Tuple[Tuple[str, ...], Tuple[int, ...]]:
    """Resolve a comma-separated observable list against what a model offers.

    An empty request selects everything.  Returns names and their indices.
    """
    names = [s.strip() for s in requested.split(",") if s.strip()]
    if not names:
        return tuple(available), tuple(range(len(available)))
    unknown = [n for n in names if n not in available]
    if unknown:
        raise ConfigInvalid(
            f"unknown observable(s) {', '.join(unknown)}; available: {', '.join(available)}"
        )
    if len(set(names)) != len(names):
        raise ConfigInvalid("observables list contains duplicates")
    return tuple(names), tuple(available.index(n) for n in names)


def require_positive(params: Mapping[str, Any], *keys: str) -> None:
    for key in keys:
        if not params[key] > 0:
            raise ConfigInvalid(f"{key} must be positive, got {params[key]}")
