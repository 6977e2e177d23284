"""Command-line entry point: ``flapguard run|detect|sweep``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical
failure, 4 non-uniform sampling in ``detect`` input.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ScenarioConfig, format_value, load_config, parse_override
from .detector import Detector, DetectorConfig
from .engine import PAYLOAD_FIELDS, RunResult, run
from .errors import (
    AlgebraicSolveFailed,
    ConfigInvalid,
    NonFiniteSample,
    NumericalFailure,
)
from .scenarios import SCENARIO_KINDS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NONUNIFORM = 4

SEED_ENV = "FLAPGUARD_SEED"
SAMPLING_JITTER = 1e-6

_NUMERICAL_ERRORS = (AlgebraicSolveFailed, NumericalFailure, NonFiniteSample)


class _Reporter:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def info(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr)

    @staticmethod
    def error(msg: str) -> None:
        print(f"flapguard: error: {msg}", file=sys.stderr)


def fmt_number(value) -> str:
    """Fixed 9-significant-digit text for floats; integers stay integers."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".9g")


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def _env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigInvalid(f"{SEED_ENV}={raw!r} is not an integer") from None


def read_config(
    path: str, overrides: Sequence[str], seed: Optional[int]
) -> ScenarioConfig:
    """Load a config file (or a bare built-in scenario name) plus overrides."""
    p = Path(path)
    if p.is_file():
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigInvalid(f"cannot read {path}: {exc}") from None
    elif path in SCENARIO_KINDS:
        text = f"[scenario]\nkind = {path}\n"
    else:
        raise ConfigInvalid(
            f"{path}: no such config file (built-in scenarios: {', '.join(SCENARIO_KINDS)})"
        )
    pairs = dict(parse_override(item) for item in overrides)
    return load_config(text, pairs, source=path, seed=seed, fallback_seed=_env_seed())


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------


def write_timeseries(result: RunResult, path: Path) -> None:
    table = np.column_stack([result.times, result.data]) if result.data.size else result.times[:, None]
    header = ",".join(("t_s",) + tuple(result.observables))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, table, fmt="%.9g", delimiter=",")


def write_events(result: RunResult, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("t_s", "device_id", "kind") + PAYLOAD_FIELDS)
        for e in result.events:
            writer.writerow(
                [fmt_number(e.t), e.device_id, e.kind]
                + [fmt_number(getattr(e, f)) for f in PAYLOAD_FIELDS]
            )


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(data: Dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def execute(
    config: ScenarioConfig, out_dir: Path, config_path: str, report: _Reporter
) -> int:
    """Run one scenario and write every output file into ``out_dir``."""
    started = time.perf_counter()
    try:
        result = run(config)
    except ConfigInvalid as exc:
        report.error(str(exc))
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        report.error(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    elapsed = time.perf_counter() - started

    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "timeseries": out_dir / "timeseries.csv",
        "events": out_dir / "events.csv",
        "summary": out_dir / "summary.json",
        "resolved_config": out_dir / "resolved.cfg",
        "manifest": out_dir / "manifest.json",
    }
    write_timeseries(result, files["timeseries"])
    write_events(result, files["events"])
    write_json(result.summary, files["summary"])
    files["resolved_config"].write_text(config.to_text(), encoding="utf-8")
    manifest = {
        "tool": "flapguard",
        "version": __version__,
        "config_path": str(config_path),
        "config_hash": config.hash(),
        "scenario": config.kind,
        "seed": config.seed,
        "outputs": {k: str(v) for k, v in files.items()},
        "wall_clock_s": round(elapsed, 3),
        "resolved_config": {k: format_value(v) for k, v in sorted(config.params.items())},
    }
    write_json(manifest, files["manifest"])
    counts = result.summary.get("event_counts", {})
    report.info(
        f"{config.kind}: t_end={result.summary['t_end']:g} s, "
        f"FLAG_UP={counts.get('FLAG_UP', 0)}, wrote {out_dir}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    report = _Reporter(args.quiet)
    try:
        config = read_config(args.config, args.set or [], args.seed)
    except ConfigInvalid as exc:
        report.error(str(exc))
        return EXIT_CONFIG
    return execute(config, Path(args.out), args.config, report)


def _read_stream(path: str, column: str):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        return np.empty(0), np.empty(0)
    header = [h.strip() for h in rows[0]]
    if "t_s" not in header:
        raise ConfigInvalid(f"{path}: header must contain a t_s column")
    if column not in header:
        raise ConfigInvalid(f"{path}: no column {column!r} (have {', '.join(header)})")
    ti, vi = header.index("t_s"), header.index(column)
    try:
        t = np.array([float(r[ti]) for r in rows[1:]])
        v = np.array([float(r[vi]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise ConfigInvalid(f"{path}: malformed row ({exc})") from None
    return t, v


def cmd_detect(args) -> int:
    report = _Reporter(args.quiet)
    try:
        t, v = _read_stream(args.csv, args.column)
    except OSError as exc:
        report.error(f"cannot read {args.csv}: {exc}")
        return EXIT_CONFIG
    except ConfigInvalid as exc:
        report.error(str(exc))
        return EXIT_CONFIG

    dt = args.dt
    if t.size >= 2:
        dt = (t[-1] - t[0]) / (t.size - 1)
        if not dt > 0:
            report.error("time column must be increasing")
            return EXIT_NONUNIFORM
        drift = np.abs(t - (t[0] + dt * np.arange(t.size)))
        if drift.max() > SAMPLING_JITTER:
            report.error(
                f"sampling is not uniform (max deviation {drift.max():.3g} s > {SAMPLING_JITTER} s)"
            )
            return EXIT_NONUNIFORM
    try:
        config = DetectorConfig(
            dt=float(dt),
            window_seconds=args.window_seconds,
            shift_seconds=args.shift_seconds,
            t_min=args.t_min,
            t_max=args.t_max,
            r_threshold=args.r_threshold,
            epsilon=args.epsilon,
            persistence=args.persistence,
            sigma_floor=args.sigma_floor,
            extended_buffer=not args.window_only,
        )
    except ConfigInvalid as exc:
        report.error(str(exc))
        return EXIT_CONFIG

    detector = Detector(config)
    rows: List[List[str]] = []
    rises = 0
    try:
        for ti, vi in zip(t, v):
            out = detector.step(float(vi))
            if out.evaluated:
                rises += out.flag_rising_edge
                rows.append(
                    [fmt_number(ti), fmt_number(out.r_star), fmt_number(out.k_star),
                     fmt_number(out.counter), fmt_number(out.flag)]
                )
    except NonFiniteSample as exc:
        report.error(str(exc))
        return EXIT_NUMERICAL

    header = ["t_s", "r_star", "k_star", "counter", "flag"]
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_dir / "detections.csv"
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        report.info(f"{len(rows)} evaluations, {rises} flag rise(s); wrote {target}")
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        report.info(f"{len(rows)} evaluations, {rises} flag rise(s)")
    return EXIT_OK


def _sweep_row(index, key, value, seed, code, out_dir: Path) -> List[str]:
    row = [str(index), key, value, str(seed), str(code)]
    summary_path = out_dir / "summary.json"
    if code == EXIT_OK and summary_path.is_file():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        counts = summary.get("event_counts", {})
        firsts = summary.get("first_detection_s", {})
        first = min(firsts.values()) if firsts else None
        row += [
            str(counts.get("FLAG_UP", 0)),
            fmt_number(first),
            str(counts.get("MITIGATE", 0)),
            str(counts.get("BLOCK", 0)),
            str(counts.get("GAIN_SWITCH", 0)),
        ]
    else:
        row += ["", "", "", "", ""]
    return row


def cmd_sweep(args) -> int:
    report = _Reporter(args.quiet)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        report.error("sweep needs at least one value")
        return EXIT_CONFIG
    try:
        base = read_config(args.config, args.set or [], args.seed)
        parse_override(f"{args.param}=0")
        configs = []
        for i, value in enumerate(values):
            cfg = base.with_overrides({args.param: value, "sim.seed": base.seed + i})
            configs.append(cfg)
    except ConfigInvalid as exc:
        report.error(str(exc))
        return EXIT_CONFIG

    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    worst = EXIT_OK
    table = []
    for i, (value, cfg) in enumerate(zip(values, configs)):
        child = out_root / f"run_{i:03d}"
        code = execute(cfg, child, args.config, report)
        worst = max(worst, code)
        table.append(_sweep_row(i, args.param, value, cfg.seed, code, child))
    with open(out_root / "sweep_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["index", "param", "value", "seed", "exit_code", "flag_up", "first_detection_s",
             "mitigate", "block", "gain_switch"]
        )
        writer.writerows(table)
    report.info(f"sweep of {args.param} over {len(values)} value(s); wrote {out_root}")
    return worst


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flapguard",
        description="Simulate and detect flapping oscillations of discrete grid devices.",
    )
    parser.add_argument("--version", action="version", version=f"flapguard {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_config=True):
        if with_config:
            p.add_argument("config", help="config file, or a built-in scenario name")
            p.add_argument("--seed", type=int, default=None,
                           help=f"root seed (falls back to the config, then ${SEED_ENV})")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override one config key; repeatable")
        p.add_argument("--quiet", action="store_true", help="suppress progress messages")

    p_run = sub.add_parser("run", help="run one scenario and write its outputs")
    common(p_run)
    p_run.add_argument("--out", default="flapguard_out", metavar="DIR")
    p_run.set_defaults(func=cmd_run)

    p_det = sub.add_parser("detect", help="replay a t_s,value CSV through one detector")
    p_det.add_argument("csv", help="CSV with a t_s column and a value column")
    p_det.add_argument("--column", default="value", help="column to analyze (default: value)")
    p_det.add_argument("--dt", type=float, default=0.1,
                       help="sampling interval used when the CSV has fewer than two rows")
    p_det.add_argument("--window-seconds", type=float, default=12.0)
    p_det.add_argument("--shift-seconds", type=float, default=3.0)
    p_det.add_argument("--t-min", type=float, default=0.9)
    p_det.add_argument("--t-max", type=float, default=1.1)
    p_det.add_argument("--r-threshold", type=float, default=0.9)
    p_det.add_argument("--epsilon", type=float, default=1e-3)
    p_det.add_argument("--persistence", type=int, default=4)
    p_det.add_argument("--sigma-floor", type=float, default=1e-9)
    p_det.add_argument("--window-only", action="store_true",
                       help="use the plain biased estimator on exactly one window")
    p_det.add_argument("--out", default=None, metavar="DIR",
                       help="write detections.csv here instead of standard output")
    common(p_det, with_config=False)
    p_det.set_defaults(func=cmd_detect)

    p_sw = sub.add_parser("sweep", help="run a scenario once per value of one parameter")
    common(p_sw)
    p_sw.add_argument("--param", required=True, help="dotted config key to vary")
    p_sw.add_argument("--values", required=True, help="comma-separated values")
    p_sw.add_argument("--out", default="flapguard_sweep", metavar="DIR")
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
