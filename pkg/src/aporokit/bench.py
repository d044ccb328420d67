"""Benchmark harness: chronological and k-fold splits, prompt construction,
constrained label parsing, and the binary toxicity collapse.

The chronological split trains on the earlier part of the collection window
and tests on the later part, mimicking deployment on future data. Generative
models are asked for exactly one class name; anything else is a recorded
parse failure scored as "None".
"""

from __future__ import annotations

import csv
import json
import random
import re
import string
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .annotation.store import LABELS, LabelValue
from .ingest import parse_timestamp


class BenchError(Exception):
    pass


@dataclass
class DatasetRow:
    id: str
    text: str
    label: str
    region: str = ""
    topic_id: int | None = None
    month: str = ""
    created_at: datetime | None = None

    @property
    def timestamp(self) -> datetime:
        if self.created_at is not None:
            return self.created_at
        if self.month:
            year, month = self.month.split("-")
            return datetime(int(year), int(month), 1, tzinfo=timezone.utc)
        raise BenchError(f"row {self.id!r} has no timestamp")


def load_dataset(path: str | Path) -> list[DatasetRow]:
    """Read an exported dataset CSV/TSV (columns id, text, region, topic_id,
    month, label; optional created_at)."""
    path = Path(path)
    delimiter = "\t" if path.suffix.lower() == ".tsv" else ","
    rows: list[DatasetRow] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        for raw in csv.DictReader(fh, delimiter=delimiter):
            topic_raw = raw.get("topic_id")
            rows.append(
                DatasetRow(
                    id=raw["id"],
                    text=raw.get("text", ""),
                    label=raw["label"],
                    region=raw.get("region", ""),
                    topic_id=int(topic_raw) if topic_raw not in (None, "", "None") else None,
                    month=raw.get("month", ""),
                    created_at=parse_timestamp(raw["created_at"]) if raw.get("created_at") else None,
                )
            )
    return rows


@dataclass
class DatasetSplit:
    train_ids: list[str]
    test_ids: list[str]
    cut_timestamp: datetime

    def save(self, path: str | Path) -> None:
        payload = {
            "train_ids": self.train_ids,
            "test_ids": self.test_ids,
            "cut_timestamp": self.cut_timestamp.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetSplit":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            train_ids=list(payload["train_ids"]),
            test_ids=list(payload["test_ids"]),
            cut_timestamp=parse_timestamp(payload["cut_timestamp"]),
        )


def chronological_split(rows: list[DatasetRow], cut: datetime | str = "auto") -> DatasetSplit:
    """Train on rows strictly before the cut, test on the rest. "auto" places
    the cut at the two-thirds point of the observed time range."""
    if not rows:
        raise BenchError("empty dataset")
    stamps = [row.timestamp for row in rows]
    if isinstance(cut, str):
        if cut != "auto":
            cut_ts = parse_timestamp(cut)
        else:
            tmin, tmax = min(stamps), max(stamps)
            cut_ts = tmin + (tmax - tmin) * 2 / 3
    else:
        cut_ts = cut
    train = [row.id for row in rows if row.timestamp < cut_ts]
    test = [row.id for row in rows if row.timestamp >= cut_ts]
    if not train:
        raise BenchError("chronological split produced an empty training side")
    if not test:
        raise BenchError("chronological split produced an empty test side")
    return DatasetSplit(train_ids=train, test_ids=test, cut_timestamp=cut_ts)


def kfold_split(rows: list[DatasetRow], k: int = 3, seed: int = 0) -> list[list[str]]:
    """Stratified-by-label folds of near-equal size (within one)."""
    if k < 2:
        raise BenchError("k must be >= 2")
    if k > len(rows):
        raise BenchError(f"k={k} exceeds dataset size {len(rows)}")
    rng = random.Random(seed)
    by_label: dict[str, list[str]] = {}
    for row in rows:
        by_label.setdefault(row.label, []).append(row.id)
    folds: list[list[str]] = [[] for _ in range(k)]
    start = 0
    for label in sorted(by_label):
        ids = sorted(by_label[label])
        rng.shuffle(ids)
        # rotate the starting fold so per-label remainders spread evenly
        for offset, row_id in enumerate(ids):
            folds[(start + offset) % k].append(row_id)
        start = (start + len(ids)) % k
    return folds


def clean_text(text: str) -> str:
    """Strip user mentions and URLs before training or prompting."""
    text = re.sub(r"https?://\S+", " ", text)
    text = re.sub(r"@\w+", " ", text)
    return re.sub(r"\s+", " ", text).strip()


@dataclass
class PromptSpec:
    system_text: str
    user_template: str
    exemplars: list[tuple[str, str]] = field(default_factory=list)
    decoding: dict = field(
        default_factory=lambda: {"temperature": 0.7, "max_output_tokens": 10, "n_choices": 1}
    )

    def validate(self) -> None:
        if "{tweet}" not in self.user_template:
            raise BenchError("user_template is missing the {tweet} slot")
        if self.exemplars:
            if len(self.exemplars) != 9:
                raise BenchError("few-shot specs carry exactly 9 exemplars")
            per_class = {label: 0 for label in LABELS}
            for _, label in self.exemplars:
                if label not in per_class:
                    raise BenchError(f"exemplar label {label!r} is not a class name")
                per_class[label] += 1
            if set(per_class.values()) != {3}:
                raise BenchError("few-shot exemplars must be class-balanced 3/3/3")
            if "{examples}" not in self.user_template:
                raise BenchError("few-shot template is missing the {examples} slot")

    @classmethod
    def load(cls, path: str | Path) -> "PromptSpec":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        spec = cls(
            system_text=payload["system_text"],
            user_template=payload["user_template"],
            exemplars=[tuple(pair) for pair in payload.get("exemplars", [])],
            decoding=payload.get("decoding", {"temperature": 0.7, "max_output_tokens": 10, "n_choices": 1}),
        )
        spec.validate()
        return spec


def build_prompt(spec: PromptSpec, tweet: str) -> tuple[str, str]:
    """Render (system, user) messages for one tweet. The tweet is embedded
    verbatim, so distinct tweets always yield distinct prompts."""
    spec.validate()
    examples_block = ""
    if spec.exemplars:
        lines = ["Examples:", "", "Tweet, Classification"]
        for text, label in spec.exemplars:
            lines.append(f'"{text}" , {label}')
        examples_block = "\n".join(lines)
    user = spec.user_template
    if "{examples}" in user:
        user = user.replace("{examples}", examples_block)
    user = user.replace("{tweet}", tweet)
    return spec.system_text, user


@dataclass(frozen=True)
class ParsedLabel:
    label: LabelValue
    failed: bool = False


_PUNCT_TABLE = str.maketrans("", "", string.punctuation + "‘’“”")
_CLASS_BY_TOKEN = {label.casefold(): LabelValue(label) for label in LABELS}


def parse_label(raw: str) -> ParsedLabel:
    """Total parser for generative output: exact class name after
    normalization, else a unique class-name token anywhere; anything
    ambiguous or alien is a parse failure scored as "None"."""
    normalized = raw.strip().casefold().translate(_PUNCT_TABLE).strip()
    if normalized in _CLASS_BY_TOKEN:
        return ParsedLabel(_CLASS_BY_TOKEN[normalized])
    tokens = normalized.split()
    found = {_CLASS_BY_TOKEN[tok] for tok in tokens if tok in _CLASS_BY_TOKEN}
    if len(found) == 1:
        return ParsedLabel(found.pop())
    return ParsedLabel(LabelValue.NONE, failed=True)


BINARY_TOXIC = "Toxic"
BINARY_NONTOXIC = "NonToxic"


def collapse_binary(labels: list[str | LabelValue]) -> list[str]:
    """Ternary -> binary: Direct becomes Toxic; Reporting and None merge into
    NonToxic."""
    out = []
    for label in labels:
        value = label.value if isinstance(label, LabelValue) else str(label)
        if value not in LABELS:
            raise BenchError(f"unknown label {value!r}")
        out.append(BINARY_TOXIC if value == LabelValue.DIRECT.value else BINARY_NONTOXIC)
    return out


def default_prompt_spec(few_shot: bool = True) -> PromptSpec:
    """The shipped prompt spec (data/prompt_fewshot.json or prompt_zeroshot.json)."""
    from importlib import resources

    name = "prompt_fewshot.json" if few_shot else "prompt_zeroshot.json"
    payload = json.loads(resources.files("aporokit").joinpath(f"data/{name}").read_text("utf-8"))
    spec = PromptSpec(
        system_text=payload["system_text"],
        user_template=payload["user_template"],
        exemplars=[tuple(pair) for pair in payload.get("exemplars", [])],
        decoding=payload["decoding"],
    )
    spec.validate()
    return spec


def write_predictions(
    path: str | Path, rows: list[dict]
) -> None:
    """Predictions file: one (id, gold, pred, seed, parse_flag) row per item."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["id", "gold", "pred", "seed", "parse_flag"])
        writer.writeheader()
        writer.writerows(rows)


def read_predictions(path: str | Path) -> list[dict]:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
