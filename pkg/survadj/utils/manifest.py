"""Run manifests written next to every CLI output file."""

import hashlib
import json
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from survadj import __version__

MANIFEST_SUFFIX = ".manifest.json"


class RunManifest(BaseModel):
    """Everything needed to re-run a command bit-identically."""

    schema_version: str = "1.0"
    command: str
    argv: list[str] = Field(default_factory=list)
    config: dict[str, Any] = Field(default_factory=dict)
    input_hashes: dict[str, str] = Field(default_factory=dict)
    model_id: str | None = None
    seed: int | None = None
    library_version: str = __version__
    python_version: str = Field(default_factory=platform.python_version)
    started_at: str
    finished_at: str | None = None


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def file_sha256(path: str | Path) -> str:
    """Hex sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_inputs(paths: dict[str, str | Path | None]) -> dict[str, str]:
    """sha256 for each named input file that was actually given."""
    return {name: file_sha256(p) for name, p in paths.items() if p is not None}


def manifest_path(output_path: str | Path) -> Path:
    out = Path(output_path)
    return out.with_name(out.name + MANIFEST_SUFFIX)


def save_manifest(manifest: RunManifest, output_path: str | Path) -> Path:
    """Write the manifest to ``<output_path>.manifest.json``.

    Args:
        manifest: The manifest to save.
        output_path: Path of the output file the manifest accompanies.

    Returns:
        Path of the written manifest.
    """
    if manifest.finished_at is None:
        manifest = manifest.model_copy(update={"finished_at": utc_now()})
    target = manifest_path(output_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return target


def load_manifest(path: str | Path) -> RunManifest | None:
    """Load a manifest file, or None if it doesn't exist or is invalid."""
    try:
        return RunManifest.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError):
        return None
