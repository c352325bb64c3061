"""Centralized feature-flag loader for solver diagnostics and CLI defaults.

Precedence, lowest first: built-in defaults, ``config/feature_flags.json``
in the working directory, then ``RIS_D2D_FLAG_<NAME>`` environment
variables. Values are coerced to the type of the default.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any

_log = logging.getLogger(__name__)

DEFAULT_FEATURE_FLAGS: dict[str, Any] = {
    "sinr_cross_check_enabled": False,
    "sdp_debug_dump_dir": "",
    "randomization_samples_default": 1000,
    "sweep_jobs_default": 1,
}

ENV_PREFIX = "RIS_D2D_FLAG_"
_TRUTHY = frozenset({"1", "true", "yes", "on"})


def default_feature_flags_path() -> Path:
    return Path.cwd() / "config" / "feature_flags.json"


def _coerce_flag_value(key: str, value: Any) -> Any:
    default = DEFAULT_FEATURE_FLAGS[key]
    match default:
        case bool():
            return value if isinstance(value, bool) else str(value).strip().lower() in _TRUTHY
        case int():
            try:
                return int(value)
            except (TypeError, ValueError):
                _log.warning("Ignoring non-integer value %r for flag %s", value, key)
                return default
        case str():
            return str(value).strip()
    return value


def _file_overrides(path: Path) -> dict[str, Any]:
    if not path.exists():
        return {}
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        _log.warning("Could not read feature flags from %s; using defaults", path, exc_info=True)
        return {}
    if not isinstance(payload, dict):
        _log.warning("Feature flag file %s is not a JSON object; ignoring it", path)
        return {}
    return {key: payload[key] for key in DEFAULT_FEATURE_FLAGS if key in payload}


def _env_overrides() -> dict[str, str]:
    found: dict[str, str] = {}
    for key in DEFAULT_FEATURE_FLAGS:
        raw = os.getenv(f"{ENV_PREFIX}{key.upper()}", "").strip()
        if raw:
            found[key] = raw
    return found


def load_feature_flags(path: Path | None = None) -> dict[str, Any]:
    flags = dict(DEFAULT_FEATURE_FLAGS)
    for overrides in (_file_overrides(path or default_feature_flags_path()), _env_overrides()):
        for key, value in overrides.items():
            flags[key] = _coerce_flag_value(key, value)
    return flags


def get_feature_flag(name: str, default: Any = None) -> Any:
    return load_feature_flags().get(name, default)
