"""Experiment configuration: flat key = value files plus TUNAS_* overrides.

The file format is a flat subset of TOML: one ``key = value`` per line,
``#`` comments, quoted or bare strings, ints, floats, and true/false.
Precedence, lowest to highest: dataclass defaults, config file,
``TUNAS_<KEY>`` environment variables, explicit CLI flags.
"""

from __future__ import annotations

import dataclasses
import os
import types
import typing

from .loop import SearchConfig

ENV_PREFIX = "TUNAS_"


class ConfigError(ValueError):
    pass


def _parse_scalar(raw: str):
    raw = raw.strip()
    if not raw:
        raise ConfigError("empty value")
    if raw[0] in "\"'":
        if len(raw) < 2 or raw[-1] != raw[0]:
            raise ConfigError(f"unterminated string: {raw}")
        return raw[1:-1]
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    if low in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_flat_config(text: str) -> dict:
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = stripped.partition("=")
        value = value.strip()
        if value and value[0] not in "\"'" and "#" in value:
            value = value.split("#", 1)[0].strip()
        out[key.strip()] = _parse_scalar(value)
    return out


def load_config_file(path) -> dict:
    with open(path) as f:
        return parse_flat_config(f.read())


_FIELDS = {f.name: f for f in dataclasses.fields(SearchConfig)}
_HINTS = typing.get_type_hints(SearchConfig)


def _coerce(name: str, value, target_type):
    origin = typing.get_origin(target_type)
    if origin is types.UnionType or origin is typing.Union:
        args = [a for a in typing.get_args(target_type) if a is not type(None)]
        if value is None:
            return None
        target_type = args[0]
    if value is None:
        raise ConfigError(f"{name}: value may not be none")
    if target_type is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if target_type is float:
        if isinstance(value, bool):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if target_type is str:
        return str(value)
    return value


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX) :].lower()
        if name == "backend":  # consumed at import by the kernel selector
            continue
        if name not in _FIELDS:
            raise ConfigError(f"unknown config key from {key}")
        out[name] = _parse_scalar(raw)
    return out


def resolve_config(
    file_values: dict | None = None,
    environ=None,
    overrides: dict | None = None,
) -> SearchConfig:
    """Merge defaults, file values, TUNAS_* variables, and CLI overrides
    into a validated SearchConfig."""
    merged: dict = {}
    for source in (file_values or {}, env_overrides(environ), overrides or {}):
        for key, value in source.items():
            if value is None and key not in _FIELDS:
                continue
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
    kwargs = {}
    for name, value in merged.items():
        kwargs[name] = _coerce(name, value, _HINTS[name])
    return SearchConfig(**kwargs)
