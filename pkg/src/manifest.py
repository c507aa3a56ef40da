"""Run manifest: config digest, seed and per-stage artifact checksums."""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import PipelineConfig
from .errors import DataError
from .jsonl import write_json

logger = logging.getLogger(__name__)


class ManifestError(DataError):
    """Manifest file is missing, corrupt or inconsistent."""

    pass


def config_digest(config: PipelineConfig) -> str:
    """
    Hash of the configuration, excluding the output directory.

    Returns 16-character hex string.
    """
    data = config.to_dict()
    data["paths"] = {k: v for k, v in data["paths"].items() if k != "output_dir"}
    encoded = json.dumps(data, sort_keys=True, default=str)
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()[:16]


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class StageArtifact:
    """One stage's output file, relative to the output directory."""

    path: str
    sha256: str
    records: int

    def to_dict(self) -> dict:
        return {"path": self.path, "sha256": self.sha256, "records": self.records}


@dataclass
class RunManifest:
    """Everything needed to audit that two runs produced the same artifacts."""

    config_hash: str
    seed: int
    stages: dict[str, StageArtifact] = field(default_factory=dict)

    def record(self, stage: str, path: Path, records: int, base_dir: Path) -> StageArtifact:
        """Checksum an artifact and register it under ``stage``."""
        path = Path(path)
        try:
            relative = path.resolve().relative_to(Path(base_dir).resolve()).as_posix()
        except ValueError:
            relative = path.name
        artifact = StageArtifact(relative, file_sha256(path), records)
        self.stages[stage] = artifact
        return artifact

    def verify(self, base_dir: Path) -> list[str]:
        """Stages whose artifact is missing or no longer matches its checksum."""
        stale = []
        for stage, artifact in self.stages.items():
            path = Path(base_dir) / artifact.path
            if not path.exists() or file_sha256(path) != artifact.sha256:
                stale.append(stage)
        return stale

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "stages": {name: artifact.to_dict() for name, artifact in self.stages.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(
            config_hash=data["config_hash"],
            seed=data["seed"],
            stages={
                name: StageArtifact(entry["path"], entry["sha256"], entry["records"])
                for name, entry in data["stages"].items()
            },
        )

    def save(self, path: Path) -> None:
        """Write atomically (temp file, then rename)."""
        write_json(Path(path), self.to_dict())
        logger.debug(f"Saved run manifest to {path}")

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        """
        Raises:
            ManifestError: Missing, unreadable or structurally invalid manifest
        """
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ManifestError(f"Manifest not found: {path}")
        except json.JSONDecodeError as e:
            raise ManifestError(f"Manifest {path} is not valid JSON: {e}")

        problem = validate_manifest(data)
        if problem:
            raise ManifestError(f"Manifest {path} is invalid: {problem}")
        return cls.from_dict(data)


def validate_manifest(data) -> Optional[str]:
    """Describe the first structural problem, or None when the manifest is valid."""
    if not isinstance(data, dict):
        return "not an object"
    for key in ("config_hash", "seed", "stages"):
        if key not in data:
            return f"missing key '{key}'"
    if not isinstance(data["config_hash"], str):
        return "config_hash must be a string"
    if not isinstance(data["seed"], int):
        return "seed must be an integer"
    if not isinstance(data["stages"], dict):
        return "stages must be an object"
    for name, entry in data["stages"].items():
        if not isinstance(entry, dict) or not {"path", "sha256", "records"} <= set(entry):
            return f"stage '{name}' needs path, sha256 and records"
    return None
