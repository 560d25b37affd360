"""
Configuration file loading.

Reads a JSON object or `key = value` text and merges it over the embedded
defaults, the same way stored preferences are merged with defaults.
"""
import hashlib
import json
from dataclasses import fields
from pathlib import Path
from typing import Any

from .config import AnalysisConfig, DetectorConfig, CONFIG_DOCS, CONFIG_SOURCES
from .exceptions import ConfigError

_DETECTOR_KEYS = {f.name for f in fields(DetectorConfig)}
_ANALYSIS_KEYS = {f.name for f in fields(AnalysisConfig)} - {"detectors"}


def default_settings() -> dict[str, Any]:
    """Flat dict of every configurable key with its default."""
    return AnalysisConfig().to_flat_dict()


def _coerce_text_value(raw: str) -> Any:
    """Interpret the right-hand side of a `key = value` line."""
    raw = raw.strip()
    if not raw:
        return ""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    lowered = raw.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if "," in raw:
        return [part.strip() for part in raw.split(",") if part.strip()]
    return raw


def parse_settings_text(text: str) -> dict[str, Any]:
    """Parse a `key = value` document; `#` starts a comment."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _coerce_text_value(value)
    return out


def load_settings_file(path: str | Path) -> dict[str, Any]:
    """Load a config file as a flat dict (JSON object or key = value text)."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {p}: {e}") from e

    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: invalid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be an object")
        return data
    return parse_settings_text(text)


def build_config(overrides: dict[str, Any] | None = None) -> AnalysisConfig:
    """
    Merge overrides over the defaults and validate.

    Raises:
        ConfigError: On unknown keys, wrong types or out-of-range values
    """
    overrides = overrides or {}
    unknown = set(overrides) - _DETECTOR_KEYS - _ANALYSIS_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    detector_kwargs: dict[str, Any] = {}
    analysis_kwargs: dict[str, Any] = {}
    defaults = default_settings()
    for key, value in overrides.items():
        expected = defaults[key]
        try:
            value = _convert(value, expected)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{key}: {e}") from e
        if key in _DETECTOR_KEYS:
            detector_kwargs[key] = value
        else:
            analysis_kwargs[key] = value

    config = AnalysisConfig(detectors=DetectorConfig(**detector_kwargs), **analysis_kwargs)
    return config.validate()


def _convert(value: Any, expected: Any) -> Any:
    if isinstance(expected, bool):
        if not isinstance(value, bool):
            raise TypeError(f"expected a boolean, got {value!r}")
        return value
    if isinstance(expected, int):
        if isinstance(value, bool) or not float(value).is_integer():
            raise TypeError(f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(expected, float):
        if isinstance(value, bool):
            raise TypeError(f"expected a number, got {value!r}")
        return float(value)
    if isinstance(expected, list):
        if isinstance(value, str):
            value = [value]
        return tuple(str(v) for v in value)
    if isinstance(expected, dict):
        if not isinstance(value, dict):
            raise TypeError(f"expected an object, got {value!r}")
        return {str(k): float(v) for k, v in value.items()}
    return value


def load_config(path: str | Path | None = None, extra: dict[str, Any] | None = None) -> AnalysisConfig:
    """Defaults, then the config file, then explicit overrides."""
    merged: dict[str, Any] = {}
    if path is not None:
        merged.update(load_settings_file(path))
    if extra:
        merged.update(extra)
    return build_config(merged)


def config_hash(config: AnalysisConfig) -> str:
    """SHA-256 over the canonical JSON of the effective config."""
    canonical = json.dumps(config.to_flat_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def render_defaults() -> str:
    """Render every key with its default as commented `key = value` text."""
    lines = ["# peer-sentinel embedded defaults"]
    for key, value in default_settings().items():
        doc = CONFIG_DOCS.get(key)
        if doc:
            lines.append(f"# {doc}")
        source = CONFIG_SOURCES.get(key)
        if source:
            lines.append(f"#   source: {source}")
        if isinstance(value, list):
            rendered = ", ".join(str(v) for v in value)
        elif isinstance(value, (dict, bool)):
            rendered = json.dumps(value, sort_keys=True)
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"
