"""Built-in testbeds and the registry that maps a kind to its builder."""

from __future__ import annotations

from typing import Any, Callable, Dict

from ..errors import ConfigInvalid
from . import avr_limit_cycle, dfr_frequency, ultc_cascade
from .avr_limit_cycle import build_avr_limit_cycle
from .dfr_frequency import build_dfr_frequency
from .ultc_cascade import build_ultc_cascade

_REGISTRY: Dict[str, tuple] = {
    dfr_frequency.KIND: (dfr_frequency.DEFAULTS, build_dfr_frequency),
    ultc_cascade.KIND: (ultc_cascade.DEFAULTS, build_ultc_cascade),
    avr_limit_cycle.KIND: (avr_limit_cycle.DEFAULTS, build_avr_limit_cycle),
}

SCENARIO_KINDS = tuple(_REGISTRY)


def _entry(kind: str) -> tuple:
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise ConfigInvalid(
            f"unknown scenario kind {kind!r}; choose one of {', '.join(SCENARIO_KINDS)}"
        ) from None


def scenario_defaults(kind: str) -> Dict[str, Any]:
    """Copy of the built-in parameter defaults of ``kind``."""
    return dict(_entry(kind)[0])


def builder(kind: str) -> Callable:
    return _entry(kind)[1]


def build_model(config) -> Any:
    """Construct the simulation model for a resolved scenario config."""
    return builder(config.kind)(config.params)


__all__ = [
    "SCENARIO_KINDS",
    "build_avr_limit_cycle",
    "build_dfr_frequency",
    "build_model",
    "build_ultc_cascade",
    "builder",
    "scenario_defaults",
]
