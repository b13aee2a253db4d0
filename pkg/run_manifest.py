"""run_manifest.py

Single writer for every artifact a run emits, plus the run manifest.

Every file is written or recorded by ``ArtifactWriter``, so each one is listed
with its sha256 checksum. ``manifest.json`` itself is written last and is the only
file not listed in it; stage timings live there and nowhere else.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

import config
import qmat
from errors import ArtifactIOError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def format_float(value) -> str:
    """12 significant digits; empty for missing values."""
    if value is None:
        return ""
    x = float(value)
    if np.isnan(x):
        return ""
    if x == 0:
        return "0"
    return f"{x:.12g}"


def rounded(value) -> float | None:
    """Float carrying the same 12 significant digits the CSV writer emits."""
    text = format_float(value)
    return float(text) if text else None


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format_float(value)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str = config.TOOL_VERSION
    command: str = ""
    config: dict = field(default_factory=dict)
    stages: dict[str, float] = field(default_factory=dict)
    files: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "files": [dict(path=p, **self.files[p]) for p in sorted(self.files)],
            "stages": {k: round(v, 3) for k, v in self.stages.items()},
            "tool_version": self.tool_version,
        }


class ArtifactWriter:
    def __init__(self, out_dir: str, manifest: RunManifest):
        self.out_dir = out_dir
        self.manifest = manifest
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as e:
            raise ArtifactIOError(str(e), out_dir) from e

    def _target(self, rel_path: str) -> str:
        path = os.path.join(self.out_dir, rel_path)
        parent = os.path.dirname(path)
        try:
            os.makedirs(parent, exist_ok=True)
        except OSError as e:
            raise ArtifactIOError(str(e), parent) from e
        return path

    def write_bytes(self, rel_path: str, data: bytes) -> str:
        path = self._target(rel_path)
        try:
            with open(path, "wb") as f:
                f.write(data)
        except OSError as e:
            raise ArtifactIOError(str(e), path) from e
        key = rel_path.replace(os.sep, "/")
        self.manifest.files[key] = {"sha256": sha256_bytes(data), "bytes": len(data)}
        logger.debug("Wrote %s (%d bytes)", key, len(data))
        return path

    def write_json(self, rel_path: str, payload: dict) -> str:
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
        return self.write_bytes(rel_path, text.encode("utf-8"))

    def write_csv(self, rel_path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        return self.write_bytes(rel_path, buf.getvalue().encode("utf-8"))

    def write_qmat(self, rel_path: str, array: np.ndarray, kind: str) -> str:
        return self.write_bytes(rel_path, qmat.encode(array, kind))

    def record(self, path: str) -> str:
        """Register a file some other writer already put under ``out_dir``."""
        rel = os.path.relpath(path, self.out_dir)
        if rel.startswith(os.pardir):
            raise ArtifactIOError("outside the run directory " + self.out_dir, path)
        try:
            with open(path, "rb") as f:
                data = f.read()
        except OSError as e:
            raise ArtifactIOError(str(e), path) from e
        key = rel.replace(os.sep, "/")
        self.manifest.files[key] = {"sha256": sha256_bytes(data), "bytes": len(data)}
        return key

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        logger.info("Stage %s: start", name)
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.manifest.stages[name] = self.manifest.stages.get(name, 0.0) + elapsed
            logger.info("Stage %s: done in %.2fs", name, elapsed)

    def finalize(self) -> str:
        path = self._target(MANIFEST_NAME)
        text = json.dumps(self.manifest.to_dict(), sort_keys=True, indent=2) + "\n"
        try:
            with open(path, "w", encoding="utf-8") as f:
                f.write(text)
        except OSError as e:
            raise ArtifactIOError(str(e), path) from e
        logger.info("Manifest: %s (%d files)", path, len(self.manifest.files))
        return path


def verify_checksums(out_dir: str) -> list[str]:
    """Return the listed files whose on-disk checksum no longer matches."""
    with open(os.path.join(out_dir, MANIFEST_NAME), "r", encoding="utf-8") as f:
        manifest = json.load(f)
    bad = []
    for entry in manifest["files"]:
        path = os.path.join(out_dir, entry["path"])
        try:
            with open(path, "rb") as f:
                digest = sha256_bytes(f.read())
        except OSError:
            bad.append(entry["path"])
            continue
        if digest != entry["sha256"]:
            bad.append(entry["path"])
    return bad
