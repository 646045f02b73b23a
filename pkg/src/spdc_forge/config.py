"""
Run configuration: YAML loading, dotted-key overrides and schema validation.

Every physical quantity carries its unit in the key name. Example::

    materials:
      pump: ln_congruent_o_edwards1984
      signal: ln_congruent_e_jundt1997
      idler: ln_congruent_o_edwards1984
    process:
      pump_wavelength_nm: 517.4
      process_type: type-II
      length_mm: 40
      effective_length_mm: 25
      design_temperature_C: 205
      solve_poling: true
    pump: {linewidth_MHz: 1.0}
    sweep: {temperatures_C: [200, 203, 205]}
    grid: {points: 2048}
    analysis: {window_ps: 1400, pump_power_mW: 1.0, bandwidth_GHz: 7500}
    output_dir: out
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .errors import ConfigError

__all__ = ["SCHEMA", "RunConfig", "load_config", "apply_override", "validate"]



class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e6`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def _load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}

SCHEMA: dict = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "materials": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pump", "signal", "idler"],
            "properties": {k: {"type": "string", "minLength": 1} for k in ("pump", "signal", "idler")},
        },
        "process": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pump_wavelength_nm", "length_mm", "design_temperature_C"],
            "properties": {
                "pump_wavelength_nm": _POS,
                "process_type": {"enum": ["type-0", "type-I", "type-II"]},
                "length_mm": _POS,
                "effective_length_mm": _POS,
                "poling_period_um": _POS,
                "solve_poling": {"const": True},
                "grating_order": {"enum": [1, -1]},
                "design_temperature_C": {"type": "number"},
                "signal_wavelength_nm": _POS,
            },
            "oneOf": [
                {"required": ["poling_period_um"], "not": {"required": ["solve_poling"]}},
                {"required": ["solve_poling"], "not": {"required": ["poling_period_um"]}},
            ],
        },
        "pump": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"linewidth_MHz": _NONNEG, "floor_MHz": _POS},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "temperatures_C": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "start_C": {"type": "number"},
                "stop_C": {"type": "number"},
                "step_C": _POS,
            },
            "oneOf": [
                {"required": ["temperatures_C"], "not": {"anyOf": [{"required": [k]} for k in ("start_C", "stop_C", "step_C")]}},
                {"required": ["start_C", "stop_C", "step_C"], "not": {"required": ["temperatures_C"]}},
            ],
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "points": {"type": "integer", "minimum": 16},
                "span_factor": _POS,
                "half_span_THz": _POS,
            },
        },
        "jsa": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "temperature_C": {"type": "number"},
                "export_points": {"type": "integer", "minimum": 2},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "required": ["window_ps"],
            "properties": {
                "window_ps": {"type": "integer", "exclusiveMinimum": 0},
                "pump_power_mW": _POS,
                "bandwidth_GHz": _POS,
                "power_rel_error": _NONNEG,
                "duration_s": _POS,
            },
        },
        "synth": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pair_rate_Hz", "eta_signal", "eta_idler", "duration_s"],
            "properties": {
                "pair_rate_Hz": _NONNEG,
                "eta_signal": _PROB,
                "eta_idler": _PROB,
                "duration_s": _POS,
                "jitter_ps": _NONNEG,
                "dark_rate_signal_Hz": _NONNEG,
                "dark_rate_idler_Hz": _NONNEG,
                "dead_time_ps": {"type": "integer", "minimum": 0},
                "idler_delay_ps": {"type": "integer"},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "file_name": {"type": "string", "pattern": r"^[^/\\]+\.csv(\.gz)?$"},
            },
        },
        "output_dir": {"type": "string", "minLength": 1},
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration. ``data`` is the raw validated mapping."""

    data: dict
    source: str = "<dict>"

    def block(self, name: str, required: bool = True) -> dict:
        if name not in self.data:
            if required:
                raise ConfigError(f"{self.source}: missing '{name}' block")
            return {}
        return self.data[name]

    @property
    def output_dir(self) -> Path:
        return Path(self.data.get("output_dir", "."))


def validate(data: Any, source: str = "<dict>") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for err in errors:
            where = ".".join(str(p) for p in err.absolute_path) or "<root>"
            lines.append(f"{where}: {err.message}")
        raise ConfigError(f"{source}: invalid configuration\n  " + "\n  ".join(lines))
    return RunConfig(data=data, source=source)


def apply_override(data: dict, assignment: str) -> dict:
    """Return a copy of ``data`` with one ``dotted.key=value`` assignment applied.

    The value is parsed as YAML, so ``1e-3``, ``true`` and ``[1, 2]`` keep
    their types.
    """
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".")]
    if not all(parts):
        raise ConfigError(f"override {assignment!r} has an empty key component")
    try:
        value = _load_yaml(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {assignment!r}: {exc}") from exc
    out = copy.deepcopy(data)
    node = out
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {assignment!r}: '{part}' is not a block")
        node = child
    node[parts[-1]] = value
    return out


def load_config(path=None, overrides=()) -> RunConfig:
    """Read YAML (or start empty), apply overrides, validate."""
    data: Any = {}
    source = "<overrides>"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        try:
            data = _load_yaml(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for assignment in overrides:
        data = apply_override(data, assignment)
    return validate(data, source)
