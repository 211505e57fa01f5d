"""Utility modules for run bookkeeping."""

from .manifest import RunManifest, file_sha256, load_manifest, manifest_path, save_manifest

__all__ = [
    "RunManifest",
    "file_sha256",
    "load_manifest",
    "manifest_path",
    "save_manifest",
]
