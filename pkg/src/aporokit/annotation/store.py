"""Append-only annotation store: item registry, double-annotation assignment,
label recording, agreement statistics, disagreement queue, adjudication, and
dataset export.

All state is a pure function of the event log. A (item, annotator, round)
combination can carry at most one label; retries are made idempotent through
client submission ids. Adjudication is single-writer per item and immutable
once made.
"""

from __future__ import annotations

import csv
import json
import random
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path


class AnnotationError(Exception):
    pass


class AuthorizationError(AnnotationError):
    pass


class ConflictError(AnnotationError):
    pass


class LabelValue(str, Enum):
    DIRECT = "Direct"
    REPORTING = "Reporting"
    NONE = "None"


LABELS = [l.value for l in LabelValue]


@dataclass(frozen=True)
class AnnotationRecord:
    item_id: str
    annotator_id: str
    label: LabelValue | None
    insufficient_context: bool
    round: int
    timestamp: str
    submission_id: str | None = None


@dataclass(frozen=True)
class AdjudicatedItem:
    item_id: str
    final_label: LabelValue | None
    removed: bool
    resolution_note: str = ""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


class AnnotationStore:
    """Event-sourced store persisted as a JSONL log (path=None keeps it in
    memory only)."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.RLock()
        self.items: dict[str, dict] = {}
        self.assignments: dict[tuple[str, int], list[str]] = {}  # (item, round) -> annotators
        self.records: dict[tuple[str, str, int], AnnotationRecord] = {}
        self.records_by_item: dict[tuple[str, int], list[AnnotationRecord]] = {}
        self.by_submission: dict[str, AnnotationRecord] = {}
        self.adjudications: dict[str, AdjudicatedItem] = {}
        if self.path is not None and self.path.exists():
            self._replay()

    # -- log plumbing -------------------------------------------------------

    def _append(self, event: dict) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")

    def _replay(self) -> None:
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "item":
            self.items[event["item_id"]] = event["payload"]
        elif kind == "assign":
            key = (event["item_id"], event.get("round", 1))
            self.assignments.setdefault(key, []).append(event["annotator_id"])
        elif kind == "label":
            record = AnnotationRecord(
                item_id=event["item_id"],
                annotator_id=event["annotator_id"],
                label=LabelValue(event["label"]) if event.get("label") else None,
                insufficient_context=event.get("insufficient_context", False),
                round=event.get("round", 1),
                timestamp=event["timestamp"],
                submission_id=event.get("submission_id"),
            )
            self.records[(record.item_id, record.annotator_id, record.round)] = record
            self.records_by_item.setdefault((record.item_id, record.round), []).append(record)
            if record.submission_id:
                self.by_submission[record.submission_id] = record
        elif kind == "adjudicate":
            self.adjudications[event["item_id"]] = AdjudicatedItem(
                item_id=event["item_id"],
                final_label=LabelValue(event["final_label"]) if event.get("final_label") else None,
                removed=event.get("removed", False),
                resolution_note=event.get("note", ""),
            )
        else:
            raise AnnotationError(f"unknown event kind {kind!r}")

    def _emit(self, event: dict) -> None:
        self._apply(event)
        self._append(event)

    # -- items and assignment ----------------------------------------------

    def register_items(self, items: list[dict]) -> int:
        """Register item payloads (id, text, region, topic_id, month).
        Re-registering an identical payload is a no-op; a differing one
        conflicts."""
        added = 0
        with self._lock:
            for item in items:
                item_id = str(item["id"])
                payload = {k: item.get(k) for k in ("id", "text", "region", "topic_id", "month")}
                payload["id"] = item_id
                existing = self.items.get(item_id)
                if existing is not None:
                    if existing != payload:
                        raise ConflictError(f"item {item_id!r} already registered with different payload")
                    continue
                self._emit({"event": "item", "item_id": item_id, "payload": payload})
                added += 1
        return added

    def assign_items(
        self, annotators: list[str], per_item: int = 2, seed: int = 0, round: int = 1
    ) -> dict[str, list[str]]:
        """Assign every registered item to per_item distinct annotators,
        keeping annotator loads within one of each other. Deterministic for a
        fixed seed."""
        if per_item > len(annotators):
            raise AnnotationError(f"per_item={per_item} exceeds {len(annotators)} annotators")
        if per_item < 1:
            raise AnnotationError("per_item must be >= 1")
        rng = random.Random(seed)
        loads = {a: 0 for a in annotators}
        with self._lock:
            if any(rnd == round for _, rnd in self.assignments):
                raise ConflictError(f"round {round} already has assignments")
            for item_id in sorted(self.items):
                ranked = sorted(annotators, key=lambda a: (loads[a], rng.random()))
                for annotator in ranked[:per_item]:
                    loads[annotator] += 1
                    self._emit(
                        {"event": "assign", "item_id": item_id, "annotator_id": annotator, "round": round}
                    )
        return {item: list(a) for (item, rnd), a in self.assignments.items() if rnd == round}

    def pending_items(self, annotator_id: str, round: int = 1) -> list[str]:
        out = []
        for (item_id, rnd), annotators in sorted(self.assignments.items()):
            if rnd != round or annotator_id not in annotators:
                continue
            if (item_id, annotator_id, round) not in self.records:
                out.append(item_id)
        return out

    # -- labeling ------------------------------------------------------------

    def record_label(
        self,
        item_id: str,
        annotator_id: str,
        label: LabelValue | str | None = None,
        insufficient_context: bool = False,
        round: int = 1,
        submission_id: str | None = None,
        timestamp: str | None = None,
    ) -> AnnotationRecord:
        """Store one label event. Unassigned annotators are rejected; a second
        label for the same (item, annotator, round) conflicts unless it replays
        the same submission_id, which returns the stored record unchanged."""
        if label is not None and not isinstance(label, LabelValue):
            label = LabelValue(label)
        if label is None and not insufficient_context:
            raise AnnotationError("a label is required unless insufficient_context is set")
        with self._lock:
            if item_id not in self.items:
                raise AnnotationError(f"unknown item {item_id!r}")
            if annotator_id not in self.assignments.get((item_id, round), []):
                raise AuthorizationError(f"annotator {annotator_id!r} is not assigned to item {item_id!r}")
            if submission_id and submission_id in self.by_submission:
                stored = self.by_submission[submission_id]
                if stored.item_id == item_id and stored.annotator_id == annotator_id:
                    return stored
                raise ConflictError(f"submission id {submission_id!r} already used elsewhere")
            key = (item_id, annotator_id, round)
            if key in self.records:
                raise ConflictError(f"item {item_id!r} already labeled by {annotator_id!r} in round {round}")
            event = {
                "event": "label",
                "item_id": item_id,
                "annotator_id": annotator_id,
                "label": label.value if label else None,
                "insufficient_context": insufficient_context,
                "round": round,
                "timestamp": timestamp or _now(),
                "submission_id": submission_id,
            }
            self._emit(event)
            return self.records[key]

    # -- agreement and adjudication ------------------------------------------

    def item_records(self, item_id: str, round: int = 1) -> list[AnnotationRecord]:
        recs = self.records_by_item.get((item_id, round), [])
        return sorted(recs, key=lambda r: r.annotator_id)

    def _item_in_disagreement(self, item_id: str, round: int = 1) -> bool:
        recs = self.records_by_item.get((item_id, round), [])
        if not recs:
            return False
        if any(r.insufficient_context for r in recs):
            return True
        return len({r.label for r in recs}) > 1

    def agreement(self, annotator_a: str, annotator_b: str, round: int = 1) -> dict:
        """Agreement stats over the items both annotators labeled (items with
        an insufficient_context flag from either are excluded)."""
        pairs = []
        for item_id in sorted(self.items):
            ra = self.records.get((item_id, annotator_a, round))
            rb = self.records.get((item_id, annotator_b, round))
            if ra is None or rb is None:
                continue
            if ra.insufficient_context or rb.insufficient_context:
                continue
            pairs.append((ra.label, rb.label))
        if not pairs:
            raise AnnotationError(f"no overlapping labeled items for {annotator_a!r} and {annotator_b!r}")
        return agreement_stats([a for a, _ in pairs], [b for _, b in pairs])

    def pairwise_agreement(self, round: int = 1) -> dict:
        """Per-pair stats plus a pooled vector over all double-annotated items."""
        annotators = sorted({a for (_, a, rnd) in self.records if rnd == round})
        pairs = {}
        for i, a in enumerate(annotators):
            for b in annotators[i + 1 :]:
                try:
                    pairs[f"{a}|{b}"] = self.agreement(a, b, round)
                except AnnotationError:
                    continue
        pooled_a: list[LabelValue] = []
        pooled_b: list[LabelValue] = []
        for item_id in sorted(self.items):
            recs = [r for r in self.item_records(item_id, round) if not r.insufficient_context]
            if len(recs) >= 2:
                pooled_a.append(recs[0].label)
                pooled_b.append(recs[1].label)
        pooled = agreement_stats(pooled_a, pooled_b) if pooled_a else None
        return {"pairs": pairs, "pooled": pooled}

    def disagreement_queue(self, round: int = 1) -> list[str]:
        """Items whose labels differ or that carry an insufficient_context flag,
        ordered by item id."""
        return [i for i in sorted(self.items) if self._item_in_disagreement(i, round)]

    def is_unanimous(self, item_id: str, round: int = 1) -> LabelValue | None:
        """The shared label when every assigned annotator gave the same one."""
        recs = self.records_by_item.get((item_id, round), [])
        if not recs or any(r.insufficient_context for r in recs):
            return None
        if len(recs) < len(self.assignments.get((item_id, round), [])):
            return None
        labels = {r.label for r in recs}
        if len(labels) == 1:
            return recs[0].label
        return None

    def adjudicate(
        self,
        item_id: str,
        final_label: LabelValue | str | None = None,
        remove: bool = False,
        note: str = "",
        round: int = 1,
    ) -> AdjudicatedItem:
        """Resolve an item to a final label or mark it removed; immutable after."""
        if final_label is not None and not isinstance(final_label, LabelValue):
            final_label = LabelValue(final_label)
        if remove == (final_label is not None):
            raise AnnotationError("exactly one of final_label / remove is required")
        with self._lock:
            if item_id not in self.items:
                raise AnnotationError(f"unknown item {item_id!r}")
            if item_id in self.adjudications:
                raise ConflictError(f"item {item_id!r} already adjudicated")
            if not self._item_in_disagreement(item_id, round) and self.is_unanimous(item_id, round) is None:
                raise AnnotationError(f"item {item_id!r} is not ready for adjudication")
            self._emit(
                {
                    "event": "adjudicate",
                    "item_id": item_id,
                    "final_label": final_label.value if final_label else None,
                    "removed": remove,
                    "note": note,
                }
            )
            return self.adjudications[item_id]

    def auto_adjudicate_unanimous(self, round: int = 1) -> int:
        """Finalize every unanimously labeled, not-yet-adjudicated item."""
        count = 0
        for item_id in sorted(self.items):
            if item_id in self.adjudications:
                continue
            label = self.is_unanimous(item_id, round)
            if label is not None:
                self.adjudicate(item_id, final_label=label, note="unanimous", round=round)
                count += 1
        return count

    # -- export ---------------------------------------------------------------

    def export_rows(self) -> list[dict]:
        unadjudicated = [i for i in sorted(self.items) if i not in self.adjudications]
        if unadjudicated:
            preview = ", ".join(unadjudicated[:10])
            raise AnnotationError(
                f"{len(unadjudicated)} item(s) not adjudicated yet: {preview}"
                + ("..." if len(unadjudicated) > 10 else "")
            )
        rows = []
        for item_id in sorted(self.items):
            decision = self.adjudications[item_id]
            if decision.removed:
                continue
            payload = self.items[item_id]
            rows.append(
                {
                    "id": item_id,
                    "text": payload.get("text", ""),
                    "region": payload.get("region", ""),
                    "topic_id": payload.get("topic_id", ""),
                    "month": payload.get("month", ""),
                    "label": decision.final_label.value,
                }
            )
        return rows

    def export_dataset(self, path: str | Path, delimiter: str = ",") -> dict[str, int]:
        """Write the adjudicated dataset as CSV/TSV; returns class counts."""
        rows = self.export_rows()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["id", "text", "region", "topic_id", "month", "label"], delimiter=delimiter
            )
            writer.writeheader()
            writer.writerows(rows)
        counts = {label: 0 for label in LABELS}
        for row in rows:
            counts[row["label"]] += 1
        return counts


# -- agreement math -----------------------------------------------------------


def confusion_matrix(labels_a: list[LabelValue], labels_b: list[LabelValue]) -> list[list[int]]:
    index = {LabelValue(l): i for i, l in enumerate(LABELS)}
    matrix = [[0] * len(LABELS) for _ in LABELS]
    for a, b in zip(labels_a, labels_b):
        matrix[index[LabelValue(a)]][index[LabelValue(b)]] += 1
    return matrix


def cohen_kappa(matrix: list[list[int]]) -> float:
    """Chance-corrected agreement from a square confusion matrix. The
    degenerate p_e == 1 case is defined as 1 when observed agreement is
    perfect and 0 otherwise."""
    n = sum(sum(row) for row in matrix)
    if n == 0:
        raise AnnotationError("empty confusion matrix")
    size = len(matrix)
    p_o = sum(matrix[i][i] for i in range(size)) / n
    row_marginals = [sum(matrix[i]) / n for i in range(size)]
    col_marginals = [sum(matrix[i][j] for i in range(size)) / n for j in range(size)]
    p_e = sum(r * c for r, c in zip(row_marginals, col_marginals))
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def agreement_stats(labels_a: list[LabelValue], labels_b: list[LabelValue]) -> dict:
    """Percent agreement, Cohen's kappa, and the 3x3 confusion matrix for two
    aligned label vectors."""
    if len(labels_a) != len(labels_b):
        raise AnnotationError("label vectors must align")
    if not labels_a:
        raise AnnotationError("no overlapping items")
    matrix = confusion_matrix(labels_a, labels_b)
    n = len(labels_a)
    percent = sum(matrix[i][i] for i in range(len(LABELS))) / n
    return {
        "n": n,
        "percent_agreement": percent,
        "cohen_kappa": cohen_kappa(matrix),
        "confusion": matrix,
        "labels": list(LABELS),
    }
