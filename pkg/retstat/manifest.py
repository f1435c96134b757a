"""
Run manifests.

Every CLI run writes ``manifest.json`` next to its outputs: the subcommand,
the full parameter set, seeds, versions, platform and SHA-256 digests of
input files.
"""

import hashlib
import json
import platform
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from retstat import __version__

MANIFEST_NAME = "manifest.json"
DIGEST_CHUNK = 1 << 20


@dataclass
class PlatformInfo:
    """Interpreter and machine the run executed on."""

    system: str
    machine: str
    python: str
    numpy: str

    @classmethod
    def detect(cls) -> "PlatformInfo":
        return cls(
            system=platform.system().lower(),
            machine=platform.machine().lower(),
            python=sys.version.split()[0],
            numpy=np.__version__,
        )


def file_digest(path: Path) -> str:
    """SHA-256 hex digest of a file, read in chunks."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(DIGEST_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    parameters: dict[str, Any]
    seeds: dict[str, int] = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )
    platform: PlatformInfo = field(default_factory=PlatformInfo.detect)

    def add_input(self, path: Path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / MANIFEST_NAME
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        data = json.loads(path.read_text())
        data["platform"] = PlatformInfo(**data["platform"])
        return cls(**data)
