"""JSON scenario documents: loading, validation, dotted overrides and echo.

A document is a (partial) nested mapping of ``ScenarioConfig`` fields plus an
optional ``preset`` name used as the base and an optional ``schema_version``.
Everything not given falls back to the preset or to the dataclass defaults.
"""
from __future__ import annotations

import dataclasses
import json
import numbers
import typing

from .errors import ConfigInvalid
from .sim import SCHEMA_VERSION, ScenarioConfig, preset as get_preset

_HINTS: dict = {}


def _hints(cls):
    if cls not in _HINTS:
        _HINTS[cls] = typing.get_type_hints(cls)
    return _HINTS[cls]


def _is_number(v):
    return isinstance(v, numbers.Real) and not isinstance(v, bool)


def _coerce(tp, value, path, current):
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path, current)
    args = typing.get_args(tp)
    if type(None) in args:
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path, current)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid(f"{path}: expected a boolean, got {value!r}", path)
        return value
    if tp is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigInvalid(f"{path}: expected an integer, got {value!r}", path)
        return value
    if tp is float:
        if not _is_number(value):
            raise ConfigInvalid(f"{path}: expected a number, got {value!r}", path)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigInvalid(f"{path}: expected a string, got {value!r}", path)
        return value
    if tp is tuple or typing.get_origin(tp) is tuple:
        if not isinstance(value, (list, tuple)) or not all(_is_number(v) for v in value):
            raise ConfigInvalid(f"{path}: expected a list of numbers, got {value!r}", path)
        if isinstance(current, tuple) and len(value) != len(current):
            raise ConfigInvalid(f"{path}: expected {len(current)} values, got {len(value)}", path)
        return tuple(float(v) for v in value)
    raise ConfigInvalid(f"{path}: unsupported field type {tp!r}", path)


def _build(cls, data, prefix, base):
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{prefix or 'config'}: expected an object, got {data!r}", prefix or None)
    names = [f.name for f in dataclasses.fields(cls)]
    for key in data:
        if key not in names:
            path = f"{prefix}.{key}" if prefix else key
            raise ConfigInvalid(f"unknown key {path!r}", path)
    hints = _hints(cls)
    changes = {}
    for name in names:
        if name in data:
            path = f"{prefix}.{name}" if prefix else name
            changes[name] = _coerce(hints[name], data[name], path, getattr(base, name))
    return dataclasses.replace(base, **changes)


def config_from_dict(doc, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Build and validate a config from a mapping (``preset`` key optional)."""
    if not isinstance(doc, dict):
        raise ConfigInvalid("config document must be a JSON object")
    doc = dict(doc)
    name = doc.pop("preset", None)
    if name is not None:
        if not isinstance(name, str):
            raise ConfigInvalid("preset: expected a string", "preset")
        if base is not None and base.name != name:
            raise ConfigInvalid(f"preset {name!r} conflicts with base {base.name!r}", "preset")
        base = get_preset(name)
    if base is None:
        base = ScenarioConfig()
    cfg = _build(ScenarioConfig, doc, "", base)
    return cfg.validate()


def parse_override(text):
    """``"a.b=value"`` -> ``("a.b", value)``; the value is read as JSON when possible."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigInvalid(f"override {text!r} is not of the form key=value", key or None)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _nest(path, value):
    out = value
    for part in reversed(path.split(".")):
        out = {part: out}
    return out


def apply_overrides(cfg: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply dotted-path overrides (mapping or ``key=value`` strings) in order."""
    if isinstance(overrides, dict):
        items = list(overrides.items())
    else:
        items = [parse_override(o) if isinstance(o, str) else tuple(o) for o in overrides]
    for path, value in items:
        if path in ("preset",):
            raise ConfigInvalid("the preset cannot be overridden; pass it as the base", path)
        cfg = _build(ScenarioConfig, _nest(path, value), "", cfg)
    return cfg.validate()


def load_config(path=None, overrides=(), preset=None, seed=None) -> ScenarioConfig:
    """Resolve the effective config from a file, a preset name and overrides."""
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigInvalid("config document must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigInvalid(f"unsupported schema_version {version!r}", "schema_version")
    base = get_preset(preset) if preset is not None else None
    cfg = config_from_dict(doc, base)
    cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg = apply_overrides(cfg, {"seed": seed})
    return cfg


def echo_text(cfg: ScenarioConfig) -> str:
    """Canonical, byte-stable JSON of the fully resolved config."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def write_echo(cfg: ScenarioConfig, path):
    with open(path, "w") as fh:
        fh.write(echo_text(cfg))
