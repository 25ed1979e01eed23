"""
Run Artifacts
CSV tables, JSON documents and the checksummed run manifest
"""
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd
from loguru import logger

from cli import __version__
from core.grid import ScalarField
from scaling.report import jsonable

FLOAT_FORMAT = "%.17g"


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """Header row, 17 significant digits, '\\n' line endings."""
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(obj: Any, path: Path) -> Path:
    path.write_text(json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def solution_frame(u: ScalarField) -> pd.DataFrame:
    """One row per node in C order: coordinates then u."""
    cols = ["x", "y"][: u.grid.dim]
    frame = pd.DataFrame(u.grid.points, columns=cols)
    frame["u"] = u.flat
    return frame


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Provenance of one run: config hash, tool version, stage times, file checksums."""
    name: str
    config_hash: str
    command: str
    tool_version: str = __version__
    seed: int = 0
    exit_code: int = 0
    stage_times: Dict[str, float] = field(default_factory=dict)
    files: Dict[str, str] = field(default_factory=dict)

    def add_files(self, paths: List[Path]) -> None:
        for p in sorted(paths, key=lambda q: q.name):
            self.files[p.name] = sha256_file(p)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "config_hash": self.config_hash,
            "command": self.command,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "exit_code": self.exit_code,
            "stage_times": {k: round(v, 6) for k, v in self.stage_times.items()},
            "files": dict(sorted(self.files.items())),
        }

    def write(self, out_dir: Path) -> Path:
        path = write_json(self.to_dict(), out_dir / "manifest.json")
        logger.info(f"Wrote manifest with {len(self.files)} checksummed files to {path}")
        return path
