"""Scripted annotators for batch pipeline runs and fixtures.

Each simulated annotator applies a cue-phrase heuristic to the post text and
then, with a small seeded probability, deviates to a different label. That
produces realistic disagreement rates, a non-empty adjudication queue, and a
deterministic log when driven with fixed seeds and logical timestamps.
"""

from __future__ import annotations

import hashlib
import random

from .store import AnnotationStore, LabelValue

# cue phrases aligned with the synthetic fixture generator's templates
_DIRECT_CUES = (
    "lazy",
    "handout",
    "filthy",
    "smell",
    "keep them away",
    "ruining",
    "scam",
    "junkie",
    "get a job",
    "invasion",
    "freeload",
    "dangerous to walk",
)
_REPORTING_CUES = (
    "blames",
    "blaming",
    "report",
    "reported",
    "unfair",
    "targets",
    "criticize",
    "accused",
    "mocked",
    "it is wrong how",
    "stop demonizing",
    "one rule for",
)


def heuristic_label(text: str) -> LabelValue:
    lowered = text.casefold()
    if any(cue in lowered for cue in _REPORTING_CUES):
        return LabelValue.REPORTING
    if any(cue in lowered for cue in _DIRECT_CUES):
        return LabelValue.DIRECT
    return LabelValue.NONE


def _deviate(label: LabelValue, rng: random.Random) -> LabelValue:
    others = [l for l in LabelValue if l is not label]
    return rng.choice(others)


def simulate_annotation(
    store: AnnotationStore,
    annotators: list[str],
    per_item: int = 2,
    seed: int = 0,
    noise: float = 0.08,
    insufficient_rate: float = 0.01,
) -> dict:
    """Drive a full double-annotation round over the store's registered items
    and adjudicate everything: unanimous items auto-finalize, conflicts resolve
    to the heuristic label, insufficient-context items are removed.
    """
    store.assign_items(annotators, per_item=per_item, seed=seed)
    n_labeled = 0
    for annotator in annotators:
        arng = random.Random(f"{seed}|{annotator}")
        for item_id in store.pending_items(annotator):
            text = store.items[item_id].get("text", "")
            base = heuristic_label(text)
            if arng.random() < insufficient_rate:
                store.record_label(
                    item_id,
                    annotator,
                    insufficient_context=True,
                    timestamp=_logical_ts(item_id, annotator),
                )
                n_labeled += 1
                continue
            label = _deviate(base, arng) if arng.random() < noise else base
            store.record_label(item_id, annotator, label=label, timestamp=_logical_ts(item_id, annotator))
            n_labeled += 1

    auto = store.auto_adjudicate_unanimous()
    removed = 0
    resolved = 0
    jrng = random.Random(f"{seed}|adjudication")
    for item_id in store.disagreement_queue():
        if item_id in store.adjudications:
            continue
        records = store.item_records(item_id)
        if any(r.insufficient_context for r in records):
            store.adjudicate(item_id, remove=True, note="insufficient context")
            removed += 1
        else:
            # the discussion sides with one of the two annotators
            final = jrng.choice(sorted({r.label for r in records}, key=lambda l: l.value))
            store.adjudicate(item_id, final_label=final, note="resolved by discussion")
            resolved += 1
    return {"labeled": n_labeled, "auto_adjudicated": auto, "resolved": resolved, "removed": removed}


def _logical_ts(item_id: str, annotator: str) -> str:
    # content-derived pseudo-timestamp keeps simulated logs byte-reproducible
    digest = hashlib.blake2b(f"{item_id}|{annotator}".encode(), digest_size=4).digest()
    seconds = int.from_bytes(digest, "big") % 86400
    h, rem = divmod(seconds, 3600)
    m, s = divmod(rem, 60)
    return f"2022-12-01T{h:02d}:{m:02d}:{s:02d}Z"
