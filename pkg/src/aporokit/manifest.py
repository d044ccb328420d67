"""Run manifests: one JSON record per stage invocation with the config hash,
input/output file digests, seeds, tool version, and timestamps. Digests are
content hashes, so identical inputs always produce identical digest entries.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

TOOL_VERSION = "aporokit 0.1.0"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    stage: str
    config_hash: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    started_at: str = ""
    finished_at: str = ""
    notes: dict = field(default_factory=dict)

    def start(self) -> "RunManifest":
        self.started_at = datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")
        return self

    def finish(self) -> "RunManifest":
        self.finished_at = datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")
        return self

    def add_input(self, path: str | Path) -> None:
        path = Path(path)
        if path.exists():
            self.inputs[str(path)] = file_digest(path)

    def add_output(self, path: str | Path) -> None:
        path = Path(path)
        if path.exists():
            self.outputs[str(path)] = file_digest(path)

    def save(self, runs_dir: str | Path) -> Path:
        runs_dir = Path(runs_dir)
        runs_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "stage": self.stage,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seeds": self.seeds,
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "notes": self.notes,
        }
        out = runs_dir / f"{self.stage}.json"
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return out
