"""Experiment configuration files.

A config is a single JSON object::

    {
      "protocol": {"mu": 0.5, "q": 0.3, "n_windows": 100000},
      "channel": {"distance_km": 50, "e_a": 0.05},
      "sweep": {"distances_km": [0, 10, 20], "e_a": [0.0, 0.1, 0.2]},
      "seed": 7,
      "out": "results",
      "shards": 4,
      "verify": {"cutoff": 40, "trials": 1000}
    }

Command-line flags override config fields, which override built-in
defaults. Errors carry the line of the offending key when it can be found.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .model import ChannelParams, ConfigError, PhaseMode, ProtocolParams

TOP_LEVEL = {"protocol", "channel", "sweep", "seed", "out", "shards", "threads", "verify"}
SWEEP_KEYS = {"distances_km", "e_a"}
VERIFY_KEYS = {"cutoff", "trials", "mus", "cauchy_mus"}

# Placeholders for commands that optimize mu and q themselves.
_PLACEHOLDER = {"mu": 0.5, "q": 0.5}


class ConfigFileError(ConfigError):
    """Config problem located in a file, rendered as ``path:line: message``."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None, field: str | None = None):
        self.path = path
        self.line = line
        self.detail = message
        where = path or "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}", field=field)


@dataclass
class Sweep:
    distances_km: list[float]
    e_a: list[float]


@dataclass
class ExperimentConfig:
    """Parsed experiment config.

    ``protocol`` is None when the file omits mu or q, which is fine for
    ``curve`` and ``optimize``; ``protocol_base`` always holds the validated
    remaining fields.
    """

    channel: ChannelParams
    protocol: ProtocolParams | None = None
    protocol_base: dict = field(default_factory=dict)
    sweep: Sweep | None = None
    seed: int = 0
    out: str = "out"
    shards: int = 1
    threads: int = 1
    verify: dict = field(default_factory=dict)

    @property
    def f(self) -> float:
        return float(self.protocol_base.get("f", 1.1))

    @property
    def phase_mode(self) -> PhaseMode:
        return PhaseMode(self.protocol_base.get("phase_mode", PhaseMode.COMPENSATION))

    def require_protocol(self) -> ProtocolParams:
        if self.protocol is None:
            raise ConfigError("protocol.mu and protocol.q are required for this command", field="protocol")
        return self.protocol

    def echo(self) -> dict:
        """Fully resolved config, as written into output headers."""
        out: dict[str, Any] = {
            "channel": self.channel.to_dict(),
            "protocol": self.protocol.to_dict() if self.protocol else dict(self.protocol_base),
            "seed": self.seed,
            "shards": self.shards,
        }
        if isinstance(out["protocol"].get("phase_mode"), PhaseMode):
            out["protocol"]["phase_mode"] = out["protocol"]["phase_mode"].value
        if self.sweep:
            out["sweep"] = {"distances_km": self.sweep.distances_km, "e_a": self.sweep.e_a}
        if self.verify:
            out["verify"] = dict(self.verify)
        return out


def _line_of(text: str, key: str | None) -> int | None:
    if not text or not key:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    if m is None:
        return None
    return text.count("\n", 0, m.start()) + 1


def _expect_object(value: Any, name: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a JSON object", field=name)
    return value


def _unknown(data: dict, allowed: set, section: str) -> None:
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"{section}: unknown field(s) {extra}", field=extra[0])


def _int_field(data: dict, key: str, default: int, minimum: int) -> int:
    v = data.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key}: must be an integer >= {minimum}, got {v!r}", field=key)
    return v


def _number_list(data: dict, key: str) -> list[float]:
    v = data.get(key)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"sweep.{key}: must be a non-empty list of numbers", field=key)
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"sweep.{key}: must contain only numbers", field=key)
    return [float(x) for x in v]


def _build(data: dict) -> ExperimentConfig:
    _unknown(data, TOP_LEVEL, "config")
    ch_data = _expect_object(data.get("channel", {}), "channel")
    ch_data = dict(ch_data)
    ch_data.setdefault("distance_km", 0.0)
    channel = ChannelParams.from_dict(ch_data)

    proto = dict(_expect_object(data.get("protocol", {}), "protocol"))
    if "mu" in proto and "q" in proto:
        protocol = ProtocolParams.from_dict(proto)
        base = protocol.to_dict()
    else:
        protocol = None
        ProtocolParams.from_dict({**_PLACEHOLDER, **proto})
        base = proto

    sweep = None
    if "sweep" in data:
        sw = _expect_object(data["sweep"], "sweep")
        _unknown(sw, SWEEP_KEYS, "sweep")
        sweep = Sweep(_number_list(sw, "distances_km"), _number_list(sw, "e_a"))
        for d in sweep.distances_km:
            channel.replace(distance_km=d)
        for e in sweep.e_a:
            channel.replace(e_a=e)

    verify = dict(_expect_object(data.get("verify", {}), "verify"))
    _unknown(verify, VERIFY_KEYS, "verify")
    if "cutoff" in verify:
        _int_field(verify, "cutoff", 40, 1)
    if "trials" in verify:
        _int_field(verify, "trials", 1000, 1)

    seed = _int_field(data, "seed", 0, 0)
    out = data.get("out", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("out: must be a non-empty path string", field="out")
    return ExperimentConfig(
        channel=channel,
        protocol=protocol,
        protocol_base=base,
        sweep=sweep,
        seed=seed,
        out=out,
        shards=_int_field(data, "shards", 1, 1),
        threads=_int_field(data, "threads", 1, 1),
        verify=verify,
    )


def parse_config(text: str, path: str | None = None) -> ExperimentConfig:
    """Parse and validate a JSON config document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"invalid JSON: {exc.msg} (column {exc.colno})", path, exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigFileError("top level must be a JSON object", path, 1)
    try:
        return _build(data)
    except ConfigError as exc:
        raise ConfigFileError(str(exc), path, _line_of(text, exc.field), exc.field) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigFileError(str(exc), path) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read config: {exc.strerror}", str(p)) from exc
    return parse_config(text, str(p))


def from_mapping(data: dict) -> ExperimentConfig:
    """Build a config from an already-parsed mapping (no line information)."""
    return parse_config(json.dumps(data, indent=1))
