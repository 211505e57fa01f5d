"""Configuration module for defaults and logging setup."""

from .logging_setup import get_log_level, setup_logging
from .settings import (
    BUILTIN_DEFAULTS,
    get_forest_params,
    get_section,
    load_defaults,
    load_json_file,
    reset_defaults_cache,
)

__all__ = [
    "BUILTIN_DEFAULTS",
    "get_forest_params",
    "get_log_level",
    "get_section",
    "load_defaults",
    "load_json_file",
    "reset_defaults_cache",
    "setup_logging",
]
