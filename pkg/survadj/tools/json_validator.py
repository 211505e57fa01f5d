"""Validation of JSON report files against the report schemas."""

import json
from typing import Any

from pydantic import ValidationError as PydanticValidationError

from survadj.tools.reports import REPORT_MODELS


def _location_lines(content: str, error: json.JSONDecodeError) -> list[str]:
    lines = [f"Error: {error.msg}", f"Location: Line {error.lineno}, Column {error.colno}"]
    source_lines = content.split("\n")
    if error.lineno and error.lineno <= len(source_lines):
        lines.append(f"Problem line: {source_lines[error.lineno - 1]}")
        if error.colno:
            lines.append("              " + " " * (error.colno - 1) + "^")
    return lines


def _detect_kind(parsed: Any) -> str | None:
    if not isinstance(parsed, dict):
        return None
    kind = parsed.get("kind")
    if isinstance(kind, str) and kind in REPORT_MODELS:
        return kind
    if "command" in parsed and "started_at" in parsed:
        return "manifest"
    return None


def validate_report(
    json_string: str | None = None,
    file_path: str | None = None,
    kind: str | None = None,
) -> tuple[bool, str]:
    """Validate a report's JSON syntax and its fields.

    If both are provided, ``file_path`` takes precedence. The report kind is
    taken from ``kind``, else from the document's own ``kind`` field.

    Returns:
        (is_valid, message) where the message lists the checks performed or,
        for invalid input, the error location and the offending fields.
    """
    result_parts: list[str] = []
    if file_path:
        try:
            with open(file_path, encoding="utf-8") as f:
                content = f.read()
        except FileNotFoundError:
            return False, f"❌ ERROR: File not found: {file_path}"
        except OSError as e:
            return False, f"❌ ERROR: Could not read file {file_path}: {e}"
        result_parts.extend([f"📄 Reading JSON from file: {file_path}", ""])
    elif json_string is not None:
        content = json_string
        result_parts.extend(["📄 Validating provided JSON string", ""])
    else:
        return False, "❌ ERROR: Either 'json_string' or 'file_path' must be provided."

    if not content.strip():
        return False, "❌ ERROR: JSON content is empty or contains only whitespace."

    try:
        parsed = json.loads(content)
    except json.JSONDecodeError as e:
        result_parts.extend(["❌ JSON is INVALID", ""])
        result_parts.extend(_location_lines(content, e))
        return False, "\n".join(result_parts)

    resolved = kind or _detect_kind(parsed)
    if resolved is None:
        result_parts.append("❌ Unknown report kind (expected one of: " + ", ".join(REPORT_MODELS) + ")")
        return False, "\n".join(result_parts)
    if resolved not in REPORT_MODELS:
        return False, f"❌ ERROR: Unknown report kind {resolved!r}"

    model = REPORT_MODELS[resolved]
    try:
        model.model_validate(parsed)
    except PydanticValidationError as e:
        result_parts.extend([f"❌ '{resolved}' report is INVALID", ""])
        for err in e.errors():
            where = ".".join(str(part) for part in err["loc"]) or "<root>"
            result_parts.append(f"  - {where}: {err['msg']}")
        return False, "\n".join(result_parts)

    result_parts.extend(["✅ JSON is VALID", "", "Validation details:", f"✓ Matches the '{resolved}' report schema"])
    version = parsed.get("schema_version")
    if version is not None:
        result_parts.append(f"✓ schema_version {version}")
    return True, "\n".join(result_parts)
