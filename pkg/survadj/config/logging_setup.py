"""Logging setup driven by environment variables.

Environment variables:
- SURVADJ_LOG_LEVEL: root level name (default "WARNING")
- SURVADJ_LOG_FILE: optional file that receives the same records as stderr
"""

import logging
import os

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"
_VERBOSITY_LEVELS = {1: logging.INFO, 2: logging.DEBUG}


def get_log_level(verbosity: int = 0) -> int:
    """Level from -v flags if given, else SURVADJ_LOG_LEVEL, else WARNING."""
    if verbosity > 0:
        return _VERBOSITY_LEVELS.get(min(verbosity, 2), logging.DEBUG)
    name = os.getenv("SURVADJ_LOG_LEVEL", "WARNING").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.WARNING


def setup_logging(verbosity: int = 0) -> None:
    """Configure the root logger once for a CLI run.

    This must be called before any command runs so that library warnings
    (clamped variances, dropped covariates, small strata) reach the user.
    """
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    log_file = os.getenv("SURVADJ_LOG_FILE")
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=get_log_level(verbosity), format=LOG_FORMAT, handlers=handlers, force=True)
    # the forest backend is chatty at INFO
    logging.getLogger("joblib").setLevel(logging.WARNING)
