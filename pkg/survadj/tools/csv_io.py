"""CSV ingestion for trial data, external controls and score files.

CSV contract: a mandatory header row, UTF-8, '.' as decimal separator, empty
cells or NA as missing. Trial files need ``time`` (>= 0), ``event`` (0/1) and
``arm`` (0/1); ``stratum`` (integer) is optional and every other column is a
covariate. Parsing is total: every malformed cell is reported with its 1-based
data row (header excluded), column and reason, never silently dropped.
"""

import logging
import re
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from survadj.core.errors import Diagnostic, ParseError, SchemaError, ValidationError
from survadj.core.prognostic import ExternalControls
from survadj.core.survival import TrialDataset

logger = logging.getLogger(__name__)

REQUIRED_TRIAL_COLUMNS = ("time", "event", "arm")
REQUIRED_EXTERNAL_COLUMNS = ("time", "event")
RESERVED_COLUMNS = ("time", "event", "arm", "stratum", "id")
NA_TOKENS = frozenset({"", "na", "nan", "null"})
_MAX_LISTED = 5


def read_csv_frame(path: str | Path) -> pd.DataFrame:
    """Read a CSV file as strings, stripping whitespace from headers and cells."""
    source = Path(path)
    if not source.exists():
        raise ValidationError(f"Input file not found: {source}")
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8", skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{source} is empty", [Diagnostic(0, "", "file has no header row")]) from e
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        row = int(match.group(1)) - 1 if match else 0
        raise ParseError(f"{source}: malformed CSV", [Diagnostic(row, "", str(e).strip())]) from e
    except UnicodeDecodeError as e:
        raise ParseError(f"{source} is not UTF-8", [Diagnostic(0, "", str(e))]) from e
    frame.columns = [str(c).strip() for c in frame.columns]
    return frame.apply(lambda col: col.str.strip())


def _is_missing(values: pd.Series) -> pd.Series:
    return values.str.lower().isin(NA_TOKENS)


def _parse_numeric(
    frame: pd.DataFrame,
    column: str,
    diagnostics: list[Diagnostic],
    *,
    allow_missing: bool = False,
) -> np.ndarray:
    raw = frame[column]
    missing = _is_missing(raw)
    values = pd.to_numeric(raw.where(~missing), errors="coerce").to_numpy(dtype=np.float64)
    for i in np.flatnonzero(missing.to_numpy()):
        if not allow_missing:
            diagnostics.append(Diagnostic(int(i) + 1, column, "missing value"))
    for i in np.flatnonzero(~missing.to_numpy() & np.isnan(values)):
        diagnostics.append(Diagnostic(int(i) + 1, column, f"not a number: {raw.iloc[i]!r}"))
    for i in np.flatnonzero(np.isinf(values)):
        diagnostics.append(Diagnostic(int(i) + 1, column, "must be finite"))
    return values


def _check_binary(values: np.ndarray, column: str, diagnostics: list[Diagnostic]) -> None:
    bad = np.isfinite(values) & ~np.isin(values, (0.0, 1.0))
    for i in np.flatnonzero(bad):
        diagnostics.append(Diagnostic(int(i) + 1, column, f"must be 0 or 1, got {values[i]:g}"))


def _check_time(values: np.ndarray, diagnostics: list[Diagnostic]) -> None:
    for i in np.flatnonzero(np.isfinite(values) & (values < 0)):
        diagnostics.append(Diagnostic(int(i) + 1, "time", f"must be nonnegative, got {values[i]:g}"))


def _raise_if_any(source: Path, diagnostics: list[Diagnostic]) -> None:
    if not diagnostics:
        return
    diagnostics.sort(key=lambda d: (d.row, d.column))
    listed = "; ".join(str(d) for d in diagnostics[:_MAX_LISTED])
    more = f" (+{len(diagnostics) - _MAX_LISTED} more)" if len(diagnostics) > _MAX_LISTED else ""
    raise ParseError(f"{source}: {len(diagnostics)} invalid cell(s): {listed}{more}", diagnostics)


def _require(frame: pd.DataFrame, columns: Sequence[str]) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(missing)


def covariate_columns(frame: pd.DataFrame, selected: Sequence[str] | None = None) -> list[str]:
    if selected is not None:
        _require(frame, selected)
        return list(selected)
    return [c for c in frame.columns if c not in RESERVED_COLUMNS]


def load_trial(
    path: str | Path,
    tau: float | None = None,
    pi: float | None = None,
    covariates: Sequence[str] | None = None,
) -> TrialDataset:
    """Load and validate a trial CSV.

    Args:
        path: CSV file.
        tau: Analysis horizon (default: largest follow-up time).
        pi: Target allocation (default: observed treated fraction).
        covariates: Covariate columns to keep (default: every non-reserved column).

    Returns:
        TrialDataset.

    Raises:
        SchemaError: listing missing required columns.
        ParseError: with a located diagnostic for every malformed cell.
    """
    source = Path(path)
    frame = read_csv_frame(source)
    _require(frame, REQUIRED_TRIAL_COLUMNS)
    diagnostics: list[Diagnostic] = []

    time = _parse_numeric(frame, "time", diagnostics)
    _check_time(time, diagnostics)
    event = _parse_numeric(frame, "event", diagnostics)
    _check_binary(event, "event", diagnostics)
    arm = _parse_numeric(frame, "arm", diagnostics)
    _check_binary(arm, "arm", diagnostics)

    stratum = None
    if "stratum" in frame.columns:
        stratum = _parse_numeric(frame, "stratum", diagnostics)
        for i in np.flatnonzero(np.isfinite(stratum) & (stratum != np.round(stratum))):
            diagnostics.append(Diagnostic(int(i) + 1, "stratum", f"must be an integer, got {stratum[i]:g}"))

    names = covariate_columns(frame, covariates)
    x = np.column_stack([_parse_numeric(frame, c, diagnostics) for c in names]) if names else None
    _raise_if_any(source, diagnostics)
    if len(frame) == 0:
        raise ValidationError(f"{source} has a header but no data rows")

    logger.info("[CSV] loaded %d trial rows with %d covariate(s) from %s", len(frame), len(names), source)
    return TrialDataset.from_arrays(
        time,
        event.astype(np.int64),
        arm.astype(np.int64),
        x,
        feature_names=names,
        stratum=None if stratum is None else stratum.astype(np.int64),
        tau=tau,
        pi=pi,
    )


def load_external(
    path: str | Path,
    feature_names: Sequence[str] | None = None,
    tau: float | None = None,
) -> ExternalControls:
    """Load an external control CSV; missing covariate cells are mean-imputed."""
    source = Path(path)
    frame = read_csv_frame(source)
    _require(frame, REQUIRED_EXTERNAL_COLUMNS)
    diagnostics: list[Diagnostic] = []
    time = _parse_numeric(frame, "time", diagnostics)
    _check_time(time, diagnostics)
    event = _parse_numeric(frame, "event", diagnostics)
    _check_binary(event, "event", diagnostics)
    names = covariate_columns(frame, feature_names)
    if not names:
        raise SchemaError(["<covariate columns>"])
    x = np.column_stack([_parse_numeric(frame, c, diagnostics, allow_missing=True) for c in names])
    _raise_if_any(source, diagnostics)
    return ExternalControls.from_arrays(time, event.astype(np.int64), x, names, tau)


def load_scores(path: str | Path, n: int | None = None, column: str = "score") -> np.ndarray:
    """Load a score column (named ``column``, or the only column of the file)."""
    source = Path(path)
    frame = read_csv_frame(source)
    if column not in frame.columns:
        if len(frame.columns) != 1:
            raise SchemaError([column])
        column = frame.columns[0]
    diagnostics: list[Diagnostic] = []
    values = _parse_numeric(frame, column, diagnostics)
    _raise_if_any(source, diagnostics)
    if n is not None and values.size != n:
        raise ValidationError(f"{source} has {values.size} scores for {n} subjects")
    return values


def write_scores(path: str | Path, scores: np.ndarray, column: str = "score") -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({column: scores}).to_csv(target, index=False, float_format="%.17g")
    return target
