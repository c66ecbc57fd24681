"""
Run manifests.

Every completed experiment writes ``manifest.json`` next to its outputs:
the resolved config, the package version, wall-clock time and a SHA-256
checksum per output file. The manifest is written last and atomically, so
a directory without one is an incomplete run.
"""

from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence
import hashlib
import json
import logging
import os

from src import __version__
from src.errors import ManifestError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CHUNK_SIZE = 1 << 20


def file_checksum(path: Path) -> str:
    """SHA-256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Record of one completed experiment run."""
    experiment_id: str
    config: dict
    code_version: str = __version__
    wall_clock_seconds: float = 0.0
    finished_at: str = ""
    checksums: dict[str, str] = field(default_factory=dict)

    @classmethod
    def build(cls, experiment_id: str, config: dict, out_dir: Path, outputs: Sequence[Path], wall_clock: float) -> "RunManifest":
        out_dir = Path(out_dir)
        checksums = {
            Path(p).relative_to(out_dir).as_posix(): file_checksum(Path(p))
            for p in sorted(outputs)
        }
        return cls(
            experiment_id=experiment_id,
            config=config,
            wall_clock_seconds=round(wall_clock, 3),
            finished_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            checksums=checksums,
        )

    def write(self, out_dir: Path) -> Path:
        """Write atomically: to a temporary file first, then rename."""
        path = Path(out_dir) / MANIFEST_NAME
        tmp = path.with_name(MANIFEST_NAME + ".tmp")
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str))
        os.replace(tmp, path)
        logger.info("Wrote manifest with %d outputs to %s", len(self.checksums), path)
        return path

    @classmethod
    def read(cls, out_dir: Path) -> "RunManifest":
        path = Path(out_dir) / MANIFEST_NAME
        if not path.exists():
            raise ManifestError(f"No manifest in {out_dir}; treating the run as failed")
        return cls(**json.loads(path.read_text()))


def clear_manifest(out_dir: Path) -> None:
    """Remove a previous manifest so a partial rerun is never mistaken for a complete one."""
    path = Path(out_dir) / MANIFEST_NAME
    if path.exists():
        path.unlink()


def verify_run(out_dir: Path) -> RunManifest:
    """
    Recompute every output checksum against the manifest.

    Raises:
        ManifestError: Missing manifest, missing output or checksum mismatch
    """
    manifest = RunManifest.read(out_dir)
    problems = []
    for name, expected in manifest.checksums.items():
        path = Path(out_dir) / name
        if not path.exists():
            problems.append(f"{name}: missing")
        elif file_checksum(path) != expected:
            problems.append(f"{name}: checksum mismatch")
    if problems:
        raise ManifestError(f"Run in {out_dir} failed verification: {', '.join(problems)}")
    return manifest
