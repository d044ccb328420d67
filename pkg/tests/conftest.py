from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

import pytest

from aporokit.fixtures import reference_stats_rows
from aporokit.ingest import PostRecord

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES_DIR = REPO_ROOT / "fixtures"


def make_record(
    id: str = "r1",
    text: str = "hello world",
    created_at: str = "2022-09-01T12:00:00Z",
    **kwargs,
) -> PostRecord:
    ts = datetime.fromisoformat(created_at.replace("Z", "+00:00")).astimezone(timezone.utc)
    return PostRecord(id=id, text=text, created_at=ts, **kwargs)


@pytest.fixture(scope="session")
def reference_rows() -> list[dict]:
    return reference_stats_rows()


@pytest.fixture()
def raw_jsonl(tmp_path: Path):
    def write(rows: list[dict], name: str = "raw.jsonl") -> Path:
        path = tmp_path / name
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        return path

    return write
