"""Flat, sectioned ``key = value`` configuration files.

Example::

    [scenario]
    kind = ultc_cascade

    [sim]
    t_end = 1500

    [detector.upstream]
    r_threshold = 0.35

A section name is prefixed to every key below it, so the last line sets
``detector.upstream.r_threshold``.  Keys before the first section stay
unprefixed.  Values are typed by the scenario's built-in defaults; any
key the scenario does not know is rejected.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

from .errors import ConfigInvalid

_SECTION = re.compile(r"^\[\s*([A-Za-z0-9_.\-]+)\s*\]$")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z0-9_]+)*$")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Parse config text into a ``{dotted_key: raw_string}`` mapping."""
    out: Dict[str, str] = {}
    prefix = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith(";"):
            continue
        m = _SECTION.match(line)
        if m:
            prefix = m.group(1) + "."
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        full = prefix + key
        if not _KEY.match(full):
            raise ConfigInvalid(f"{source}:{lineno}: malformed key {full!r}")
        if full in out:
            raise ConfigInvalid(f"{source}:{lineno}: duplicate key {full!r}")
        out[full] = value
    return out


def parse_override(item: str) -> tuple:
    """Split a ``key=value`` command-line override."""
    if "=" not in item:
        raise ConfigInvalid(f"override {item!r} must look like key=value")
    key, value = (part.strip() for part in item.split("=", 1))
    if not _KEY.match(key):
        raise ConfigInvalid(f"malformed override key {key!r}")
    return key, value


def coerce(key: str, raw: Any, template: Any) -> Any:
    """Convert ``raw`` to the type of ``template`` (the default value)."""
    if not isinstance(raw, str):
        raw_str = format_value(raw)
    else:
        raw_str = raw.strip()
    try:
        if isinstance(template, bool):
            low = raw_str.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw_str)
        if isinstance(template, int):
            value = float(raw_str)
            if value != int(value):
                raise ValueError(raw_str)
            return int(value)
        if isinstance(template, float):
            return float(raw_str)
    except ValueError:
        kind = type(template).__name__
        raise ConfigInvalid(f"{key}: cannot read {raw_str!r} as {kind}") from None
    return raw_str


def format_value(value: Any) -> str:
    """Canonical text form used by the echo file and the config hash."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(kind: str, params: Mapping[str, Any]) -> str:
    """Render a resolved config as canonical, re-parseable text."""
    top = sorted(k for k in params if "." not in k)
    lines = [f"{key} = {format_value(params[key])}" for key in top]
    if top:
        lines.append("")
    lines += ["[scenario]", f"kind = {kind}", ""]
    sections: Dict[str, list] = {}
    for key in sorted(k for k in params if "." in k):
        section, name = key.rsplit(".", 1)
        sections.setdefault(section, []).append((name, params[key]))
    for section in sorted(sections):
        lines.append(f"[{section}]")
        for name, value in sections[section]:
            lines.append(f"{name} = {format_value(value)}")
        lines.append("")
    return "\n".join(lines)


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved scenario inputs: kind plus every typed parameter."""

    kind: str
    params: Mapping[str, Any]

    @property
    def seed(self) -> int:
        return int(self.params["sim.seed"])

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    def to_text(self) -> str:
        return format_config(self.kind, self.params)

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ScenarioConfig":
        return resolve_config(self.kind, {**self.params, **overrides})


def resolve_config(kind: str, values: Mapping[str, Any]) -> ScenarioConfig:
    """Merge ``values`` over the defaults of ``kind``, checking keys and types."""
    from .scenarios import scenario_defaults

    defaults = scenario_defaults(kind)
    params = dict(defaults)
    unknown = sorted(k for k in values if k not in defaults)
    if unknown:
        raise ConfigInvalid(f"unknown key(s) for {kind}: {', '.join(unknown)}")
    for key, raw in values.items():
        params[key] = coerce(key, raw, defaults[key])
    return ScenarioConfig(kind, params)


def load_config(
    text: str,
    overrides: Optional[Mapping[str, str]] = None,
    source: str = "<config>",
    seed: Optional[int] = None,
    fallback_seed: Optional[int] = None,
) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from file text plus overrides.

    Seed precedence: explicit ``seed``, then ``sim.seed`` from the text or
    overrides, then ``fallback_seed``, then the built-in default.
    """
    raw = parse_config_text(text, source)
    raw.update(overrides or {})
    kind = raw.pop("scenario.kind", None)
    if kind is None:
        raise ConfigInvalid(f"{source}: missing [scenario] kind")
    if seed is not None:
        raw["sim.seed"] = str(seed)
    elif "sim.seed" not in raw and fallback_seed is not None:
        raw["sim.seed"] = str(fallback_seed)
    return resolve_config(kind, raw)


def default_config(kind: str, **overrides: Any) -> ScenarioConfig:
    """Defaults of ``kind`` with keyword overrides (dots spelled as ``__``)."""
    return resolve_config(kind, {k.replace("__", "."): v for k, v in overrides.items()})
