"""Defaults configuration loading."""

import json
import logging
import os
from pathlib import Path
from typing import Any

from survadj.core.errors import ValidationError
from survadj.core.prognostic import ForestParams

logger = logging.getLogger(__name__)

# Path to defaults.json file (in project root)
_project_root = Path(__file__).parent.parent.parent
DEFAULTS_JSON_PATH = _project_root / "defaults.json"

BUILTIN_DEFAULTS: dict[str, Any] = {
    "forest": {
        "n_estimators": 500,
        "max_depth": 5,
        "min_samples_leaf": 5,
        "max_features": None,
        "bootstrap": True,
    },
    "design": {"alpha": 0.05, "power": 0.8, "pi": 0.5},
    "analysis": {"alpha": 0.05, "alternative": "two-sided"},
    "simulation": {
        "n_external": 300,
        "n_replicates": 10000,
        "seed": 20251017,
        "alpha": 0.05,
        "pi": 0.5,
        "strategy": "ScoreOnly_M",
    },
}

# Cache for defaults data, keyed by the file it came from
_DEFAULTS_DATA: dict[str, Any] | None = None
_DEFAULTS_SOURCE: Path | None = None


def defaults_path() -> Path:
    """Path of the defaults file: SURVADJ_CONFIG if set, else defaults.json in the project root."""
    override = os.environ.get("SURVADJ_CONFIG")
    return Path(override) if override else DEFAULTS_JSON_PATH


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_defaults(path: str | Path | None = None) -> dict[str, Any]:
    """Load defaults from the JSON file, layered over the built-in values.

    Args:
        path: Explicit file; defaults to :func:`defaults_path`.

    Returns:
        Dictionary with "forest", "design", "analysis" and "simulation" sections.
    """
    global _DEFAULTS_DATA, _DEFAULTS_SOURCE

    source = Path(path) if path is not None else defaults_path()
    if _DEFAULTS_DATA is not None and _DEFAULTS_SOURCE == source:
        return _DEFAULTS_DATA

    if not source.exists():
        if path is not None or os.environ.get("SURVADJ_CONFIG"):
            raise ValidationError(f"Defaults file not found: {source}")
        logger.debug("[Config] %s not found; using built-in defaults", source)
        data: dict[str, Any] = {}
    else:
        try:
            with open(source, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Invalid defaults file {source}: {e.msg} at line {e.lineno}") from e
        if not isinstance(data, dict):
            raise ValidationError(f"Defaults file {source} must hold a JSON object")

    _DEFAULTS_DATA = _merge(BUILTIN_DEFAULTS, data)
    _DEFAULTS_SOURCE = source
    return _DEFAULTS_DATA


def reset_defaults_cache() -> None:
    global _DEFAULTS_DATA, _DEFAULTS_SOURCE
    _DEFAULTS_DATA = None
    _DEFAULTS_SOURCE = None


def get_forest_params(overrides: dict[str, Any] | None = None) -> ForestParams:
    """Forest hyper-parameters from defaults, with non-None overrides applied."""
    values = dict(load_defaults()["forest"])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ForestParams.from_dict(values)


def get_section(name: str) -> dict[str, Any]:
    """One section of the defaults ("design", "analysis", "simulation", "forest")."""
    section = load_defaults().get(name)
    if not isinstance(section, dict):
        raise ValidationError(f"Defaults section '{name}' is missing or not an object")
    return dict(section)


def load_json_file(path: str | Path) -> dict[str, Any]:
    """Read a JSON object from a scenario or config file."""
    source = Path(path)
    if not source.exists():
        raise ValidationError(f"Config file not found: {source}")
    try:
        with open(source, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"Invalid JSON in {source}: {e.msg} at line {e.lineno}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"{source} must hold a JSON object")
    return data
