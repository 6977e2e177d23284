"""Autocorrelation-based flapping detection and device-level mitigation."""

from .config import ScenarioConfig, default_config, load_config, resolve_config
from .detector import (
    DetectionOutput,
    Detector,
    DetectorConfig,
    DetectorState,
    detector_reset,
    detector_step,
)
from .engine import EventLog, RngStreams, RunResult, observe, rk4_step, run, simulate
from .signal_engine import (
    AcfResult,
    SampleWindow,
    WindowStats,
    band_peak,
    biased_acf,
    lag_bounds,
    lagged_acf,
    normalize_window,
    normalized_acf,
    window_stats,
)
from .teo import TeoTracker, impact_angle, teo_sample

__version__ = "0.1.0"

__all__ = [
    "AcfResult",
    "DetectionOutput",
    "Detector",
    "DetectorConfig",
    "DetectorState",
    "EventLog",
    "RngStreams",
    "RunResult",
    "SampleWindow",
    "ScenarioConfig",
    "TeoTracker",
    "WindowStats",
    "band_peak",
    "biased_acf",
    "default_config",
    "detector_reset",
    "detector_step",
    "impact_angle",
    "lag_bounds",
    "lagged_acf",
    "load_config",
    "normalize_window",
    "normalized_acf",
    "observe",
    "resolve_config",
    "rk4_step",
    "run",
    "simulate",
    "teo_sample",
    "window_stats",
]
