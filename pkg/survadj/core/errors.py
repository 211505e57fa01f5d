"""Exception hierarchy for the survadj library.

Every error carries a stable machine-readable ``code`` and the process exit code the
CLI maps it to. Validation problems (bad input the user can fix) exit with 2,
numerical or runtime failures exit with 1.
"""

from dataclasses import dataclass
from typing import Any


class SurvAdjError(Exception):
    """Base class for all library errors."""

    code: str = "survadj_error"
    exit_code: int = 1

    def __init__(self, message: str, details: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}


class ValidationError(SurvAdjError):
    code = "validation_error"
    exit_code = 2


@dataclass(frozen=True)
class Diagnostic:
    """Located parse problem: 1-based data row, column name, reason."""

    row: int
    column: str
    reason: str

    def __str__(self) -> str:
        return f"row {self.row}, column '{self.column}': {self.reason}"


class ParseError(ValidationError):
    code = "parse_error"

    def __init__(self, message: str, diagnostics: list[Diagnostic]) -> None:
        super().__init__(
            message,
            {"diagnostics": [{"row": d.row, "column": d.column, "reason": d.reason} for d in diagnostics]},
        )
        self.diagnostics = diagnostics


class SchemaError(ValidationError):
    code = "schema_error"

    def __init__(self, missing: list[str]) -> None:
        super().__init__(f"Missing required columns: {', '.join(missing)}", {"missing": missing})
        self.missing = missing


class FeatureMismatch(ValidationError):
    code = "feature_mismatch"

    def __init__(
        self, missing: list[str], message: str | None = None, details: dict[str, Any] | None = None
    ) -> None:
        text = message or f"Data lacks model features: {', '.join(missing)}"
        super().__init__(text, {"missing": missing, **(details or {})})
        self.missing = missing


class OutOfRange(ValidationError):
    code = "out_of_range"


class InvalidTime(ValidationError):
    code = "invalid_time"


class EmptyRiskSet(ValidationError):
    code = "empty_risk_set"


class NoEvents(SurvAdjError):
    code = "no_events"


class DegenerateInformation(SurvAdjError):
    code = "degenerate_information"


class NoRootInBracket(SurvAdjError):
    code = "no_root_in_bracket"


class SingularDesign(SurvAdjError):
    code = "singular_design"


class NonpositiveVariance(SurvAdjError):
    code = "nonpositive_variance"


class StratumDegenerate(SurvAdjError):
    code = "stratum_degenerate"

    def __init__(self, stratum: int, reason: str) -> None:
        super().__init__(f"Stratum {stratum} is degenerate: {reason}", {"stratum": stratum})
        self.stratum = stratum


class ModelFormatError(SurvAdjError):
    code = "model_format_error"
