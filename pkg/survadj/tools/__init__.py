"""Input/output helpers for the command line."""

from .csv_io import load_external, load_scores, load_trial, write_scores
from .json_validator import validate_report
from .reports import REPORT_MODELS, SCHEMA_VERSION, render_table

__all__ = [
    "REPORT_MODELS",
    "SCHEMA_VERSION",
    "load_external",
    "load_scores",
    "load_trial",
    "render_table",
    "validate_report",
    "write_scores",
]
