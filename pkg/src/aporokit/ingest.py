"""Post ingestion: loading raw records, filtering, query-term matching, masking.

Input is file-based (JSONL or CSV) with the fields a social-media export
carries: id, text, created_at, place_country, user_location_raw, user_name,
screen_name, is_retweet. Filtering removes retweets, exact duplicates,
posts with external URLs, hashtag-heavy posts, and bot-named accounts, in
that order; every rejected record is charged to exactly one rule.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_PLACEHOLDER = "[GROUP]"
MAX_HASHTAGS = 5
_URL_RE = re.compile(r"https?://", re.IGNORECASE)
_WS_RE = re.compile(r"\s+")

# Closed-class words that may legally follow "the poor" when it is used as a
# noun phrase ("the poor are ...", "the poor in this city ..."). A following
# open-class word ("the poor performance") signals adjectival use.
NOUN_FOLLOWERS = frozenset(
    """
    am is are was were be been being have has had do does did will would
    shall should may might must can could need ought
    and or but nor so yet for because although though while whereas if
    unless until when whenever where wherever as than that whether
    in on at by with about against between into through during before
    after above below to from up down of off over under again further
    across around near without within along among
    i you he she it we they me him her us them my your his its our their
    mine yours hers ours theirs this these those who whom whose which what
    there here not never always also still just even too only
    """.split()
)


class IngestError(Exception):
    """Raised on malformed input files or contract violations."""


@dataclass
class PostRecord:
    """One raw or filtered social-media post."""

    id: str
    text: str
    created_at: datetime
    place_country: str | None = None
    user_location_raw: str | None = None
    user_name: str = ""
    screen_name: str = ""
    is_retweet: bool = False
    # derived
    hashtag_count: int = 0
    matched_terms: list[str] = field(default_factory=list)
    masked_text: str = ""
    region: str | None = None
    topic_id: int | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise IngestError("record id must be non-empty")
        self.hashtag_count = count_hashtags(self.text)

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "text": self.text,
            "created_at": self.created_at.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
            "place_country": self.place_country,
            "user_location_raw": self.user_location_raw,
            "user_name": self.user_name,
            "screen_name": self.screen_name,
            "is_retweet": self.is_retweet,
            "hashtag_count": self.hashtag_count,
            "matched_terms": self.matched_terms,
            "masked_text": self.masked_text,
        }
        if self.region is not None:
            d["region"] = self.region
        if self.topic_id is not None:
            d["topic_id"] = self.topic_id
        return d

    @property
    def month(self) -> str:
        return self.created_at.astimezone(timezone.utc).strftime("%Y-%m")


@dataclass(frozen=True)
class QueryTerm:
    id: str
    surface: str
    noun_only: bool = False


@dataclass(frozen=True)
class QueryTermSet:
    terms: tuple[QueryTerm, ...]

    def __iter__(self):
        return iter(self.terms)


def default_query_terms() -> QueryTermSet:
    """The twelve collection terms; `the poor` is noun-use only."""
    surfaces = [
        ("the-poor", "the poor", True),
        ("poor-people", "poor people", False),
        ("poor-ppl", "poor ppl", False),
        ("poor-folks", "poor folks", False),
        ("poor-families", "poor families", False),
        ("homeless", "homeless", False),
        ("on-welfare", "on welfare", False),
        ("welfare-recipients", "welfare recipients", False),
        ("low-income", "low-income", False),
        ("underprivileged", "underprivileged", False),
        ("disadvantaged", "disadvantaged", False),
        ("lower-class", "lower class", False),
    ]
    return QueryTermSet(tuple(QueryTerm(i, s, n) for i, s, n in surfaces))


def count_hashtags(text: str) -> int:
    return sum(1 for tok in text.split() if tok.startswith("#"))


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    raw = value.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise IngestError(f"unparseable timestamp {value!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


_BOOL_TRUE = {"1", "true", "t", "yes"}


def _coerce_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if value is None:
        return False
    return str(value).strip().lower() in _BOOL_TRUE


def _record_from_row(row: dict, line_no: int) -> PostRecord:
    missing = [k for k in ("id", "text", "created_at") if not row.get(k)]
    if missing:
        raise IngestError(f"line {line_no}: missing required field(s) {', '.join(missing)}")
    return PostRecord(
        id=str(row["id"]),
        text=str(row["text"]),
        created_at=parse_timestamp(str(row["created_at"])),
        place_country=row.get("place_country") or None,
        user_location_raw=row.get("user_location_raw") or None,
        user_name=str(row.get("user_name") or ""),
        screen_name=str(row.get("screen_name") or ""),
        is_retweet=_coerce_bool(row.get("is_retweet")),
    )


@dataclass
class LoadResult:
    records: list[PostRecord]
    skipped: list[tuple[int, str]] = field(default_factory=list)


def load_records_detailed(path: str | Path, fmt: str = "jsonl", fail_fast: bool = False) -> LoadResult:
    """Load post records in file order, tracking skipped rows per line.

    With fail_fast the first malformed row raises; otherwise bad rows are
    skipped and counted, keeping good ones.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if fmt not in ("jsonl", "csv"):
        raise IngestError(f"unsupported format {fmt!r}")

    result = LoadResult(records=[])
    seen_ids: set[str] = set()

    def handle(row: dict, line_no: int) -> None:
        try:
            rec = _record_from_row(row, line_no)
        except IngestError as exc:
            if fail_fast:
                raise
            logger.warning("skipping row: %s", exc)
            result.skipped.append((line_no, str(exc)))
            return
        if rec.id in seen_ids:
            msg = f"line {line_no}: duplicate id {rec.id!r}"
            if fail_fast:
                raise IngestError(msg)
            logger.warning("skipping row: %s", msg)
            result.skipped.append((line_no, msg))
            return
        seen_ids.add(rec.id)
        result.records.append(rec)

    if fmt == "jsonl":
        with path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    msg = f"line {line_no}: invalid JSON ({exc.msg})"
                    if fail_fast:
                        raise IngestError(msg) from exc
                    logger.warning("skipping row: %s", msg)
                    result.skipped.append((line_no, msg))
                    continue
                handle(row, line_no)
    else:
        with path.open("r", encoding="utf-8", newline="") as fh:
            for line_no, row in enumerate(csv.DictReader(fh), start=2):
                handle(row, line_no)
    return result


def load_records(path: str | Path, fmt: str = "jsonl", fail_fast: bool = False) -> list[PostRecord]:
    return load_records_detailed(path, fmt, fail_fast).records


REJECTION_RULES = ("retweet", "duplicate", "url", "hashtags", "bot_name")


def filter_records(records: list[PostRecord]) -> tuple[list[PostRecord], dict[str, int]]:
    """Apply the collection filters in fixed order; returns kept records and
    per-rule rejection counts. Each record is rejected by at most one rule,
    so |kept| + sum(counts) == |input|.
    """
    rejections = {rule: 0 for rule in REJECTION_RULES}
    kept: list[PostRecord] = []
    seen_texts: set[str] = set()
    for rec in records:
        if rec.is_retweet:
            rejections["retweet"] += 1
            continue
        normalized = _WS_RE.sub(" ", rec.text.casefold()).strip()
        if normalized in seen_texts:
            rejections["duplicate"] += 1
            continue
        if _URL_RE.search(rec.text):
            seen_texts.add(normalized)
            rejections["url"] += 1
            continue
        if rec.hashtag_count > MAX_HASHTAGS:
            seen_texts.add(normalized)
            rejections["hashtags"] += 1
            continue
        if "bot" in rec.user_name.casefold() or "bot" in rec.screen_name.casefold():
            seen_texts.add(normalized)
            rejections["bot_name"] += 1
            continue
        seen_texts.add(normalized)
        kept.append(rec)
    return kept, rejections


_TOKEN_RE = re.compile(r"\S+")
_STRIP_CHARS = "".join(
    # leading/trailing punctuation that may cling to a word token
    [".,;:!?\"'()[]{}<>…“”‘’`~*_|/\\&^%$#@+=—–-"]
)


@dataclass(frozen=True)
class _Token:
    start: int  # span of the word core, punctuation stripped
    end: int
    norm: str


def _tokenize_with_spans(text: str) -> list[_Token]:
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        raw = m.group(0)
        core = raw.strip(_STRIP_CHARS)
        if not core:
            continue
        start = m.start() + raw.index(core)
        tokens.append(_Token(start, start + len(core), core.casefold()))
    return tokens


def _term_token_seqs(term: QueryTerm) -> list[list[str]]:
    # multiword terms match with the words joined by space or hyphen,
    # e.g. "low-income" also as "low income"
    words = [w for w in re.split(r"[\s-]+", term.surface.casefold()) if w]
    if len(words) == 1:
        return [words]
    return [words, ["-".join(words)], [" ".join(words)]]


def match_query_terms(text: str, terms: QueryTermSet | None = None) -> list[tuple[str, tuple[int, int]]]:
    """Find non-overlapping, leftmost-longest query-term matches.

    Matches are case-insensitive on token boundaries. For noun_only terms
    the match is kept only when the next token is absent, punctuation-only,
    or a closed-class word (NOUN_FOLLOWERS); an open-class follower means
    adjectival use and the match is dropped.
    """
    if terms is None:
        terms = default_query_terms()
    tokens = _tokenize_with_spans(text)
    norms = [t.norm for t in tokens]
    matches: list[tuple[str, tuple[int, int]]] = []
    i = 0
    while i < len(tokens):
        best: tuple[int, str, tuple[int, int]] | None = None  # (n_tokens, term_id, span)
        for term in terms:
            for seq in _term_token_seqs(term):
                n = len(seq)
                if norms[i : i + n] != seq:
                    continue
                if term.noun_only:
                    j = i + n
                    if j < len(tokens) and norms[j] not in NOUN_FOLLOWERS:
                        continue
                if best is None or n > best[0]:
                    best = (n, term.id, (tokens[i].start, tokens[i + n - 1].end))
        if best is not None:
            matches.append((best[1], best[2]))
            i += best[0]
        else:
            i += 1
    return matches


def mask_terms(
    record: PostRecord,
    matches: list[tuple[str, tuple[int, int]]],
    placeholder: str = DEFAULT_PLACEHOLDER,
) -> PostRecord:
    """Set masked_text with each matched span replaced by the placeholder.

    Spans must be in-bounds and non-overlapping; text itself is unchanged.
    """
    spans = sorted((span for _, span in matches), key=lambda s: s[0])
    prev_end = 0
    for start, end in spans:
        if start < prev_end:
            raise IngestError(f"overlapping mask spans at {start}")
        if not (0 <= start < end <= len(record.text)):
            raise IngestError(f"span ({start}, {end}) out of bounds")
        prev_end = end
    pieces = []
    cursor = 0
    for start, end in spans:
        pieces.append(record.text[cursor:start])
        pieces.append(placeholder)
        cursor = end
    pieces.append(record.text[cursor:])
    record.masked_text = "".join(pieces)
    record.matched_terms = [term_id for term_id, _ in sorted(matches, key=lambda m: m[1][0])]
    return record


def ingest_records(
    records: list[PostRecord],
    terms: QueryTermSet | None = None,
    placeholder: str = DEFAULT_PLACEHOLDER,
) -> tuple[list[PostRecord], dict[str, int]]:
    """filter -> match -> mask over a loaded batch."""
    kept, rejections = filter_records(records)
    for rec in kept:
        mask_terms(rec, match_query_terms(rec.text, terms), placeholder)
    return kept, rejections


def write_records(records: list[PostRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_processed(path: str | Path) -> list[PostRecord]:
    """Read records previously written by write_records, derived fields intact."""
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            rec = PostRecord(
                id=row["id"],
                text=row["text"],
                created_at=parse_timestamp(row["created_at"]),
                place_country=row.get("place_country"),
                user_location_raw=row.get("user_location_raw"),
                user_name=row.get("user_name", ""),
                screen_name=row.get("screen_name", ""),
                is_retweet=bool(row.get("is_retweet", False)),
            )
            rec.matched_terms = list(row.get("matched_terms", []))
            rec.masked_text = row.get("masked_text", "")
            rec.region = row.get("region")
            rec.topic_id = row.get("topic_id")
            out.append(rec)
    return out
