"""Stratified sampling of topic-tagged posts under dual uniformity constraints
(region x month), with per-topic quotas and auditable shortfall handling.

Draws are taken by sorting each stratum's members on a keyed hash of
(seed, topic, region, month, id) and keeping a prefix. That makes the sample
deterministic, independent of pool order, parallel-safe per stratum, and
stable under removal of unsampled records.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .geo import REGIONS


class SamplerError(Exception):
    pass


@dataclass(frozen=True)
class StratumKey:
    topic_id: int
    region: str
    month: str


@dataclass
class SampleManifest:
    seed: int
    quotas: dict[int, int]
    requested: dict[StratumKey, int] = field(default_factory=dict)
    achieved: dict[StratumKey, int] = field(default_factory=dict)
    shortfalls: list[tuple[StratumKey, int]] = field(default_factory=list)
    sampled_ids: list[str] = field(default_factory=list)
    topic_summary: dict[int, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def key_str(k: StratumKey) -> str:
            return f"{k.topic_id}|{k.region}|{k.month}"

        return {
            "seed": self.seed,
            "quotas": {str(t): q for t, q in sorted(self.quotas.items())},
            "strata": [
                {
                    "topic_id": k.topic_id,
                    "region": k.region,
                    "month": k.month,
                    "requested": self.requested[k],
                    "achieved": self.achieved[k],
                }
                for k in sorted(self.requested, key=key_str)
            ],
            "shortfalls": [
                {"topic_id": k.topic_id, "region": k.region, "month": k.month, "deficit": d}
                for k, d in self.shortfalls
            ],
            "topic_summary": {str(t): s for t, s in sorted(self.topic_summary.items())},
            "sampled_ids": self.sampled_ids,
        }

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, payload: dict) -> "SampleManifest":
        manifest = cls(seed=payload["seed"], quotas={int(t): q for t, q in payload["quotas"].items()})
        for row in payload["strata"]:
            key = StratumKey(row["topic_id"], row["region"], row["month"])
            manifest.requested[key] = row["requested"]
            manifest.achieved[key] = row["achieved"]
        manifest.shortfalls = [
            (StratumKey(r["topic_id"], r["region"], r["month"]), r["deficit"]) for r in payload["shortfalls"]
        ]
        manifest.topic_summary = {int(t): s for t, s in payload.get("topic_summary", {}).items()}
        manifest.sampled_ids = list(payload["sampled_ids"])
        return manifest

    @classmethod
    def load(cls, path: str | Path) -> "SampleManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _draw_key(seed: int, key: StratumKey, record_id: str) -> str:
    material = f"{seed}|{key.topic_id}|{key.region}|{key.month}|{record_id}".encode("utf-8")
    return hashlib.blake2b(material, digest_size=16).hexdigest()


def largest_remainder_targets(quota: int, strata: list[StratumKey], seed: int) -> dict[StratumKey, int]:
    """Split quota over strata by largest remainder; remainder ties are broken
    by a seeded hash of the stratum so no stratum is systematically favored."""
    n = len(strata)
    base, extra = divmod(quota, n)
    targets = {key: base for key in strata}
    order = sorted(strata, key=lambda k: _draw_key(seed, k, "__rounding__"))
    for key in order[:extra]:
        targets[key] += 1
    return targets


def stratified_sample(
    pool: list[dict],
    quotas: dict[int, int],
    seed: int,
    regions: list[str] | None = None,
) -> SampleManifest:
    """Sample each topic's quota uniformly over (region, month) strata.

    Pool records are dicts with id, topic_id, region, month. Strata span all
    configured regions crossed with the months present in the pool. A stratum
    that cannot meet its target has the deficit moved to the topic's other
    strata (largest remaining capacity first) and logged as a shortfall.
    """
    regions = regions or REGIONS
    manifest = SampleManifest(seed=seed, quotas=dict(quotas))
    if not pool:
        return manifest

    months = sorted({rec["month"] for rec in pool})
    by_stratum: dict[StratumKey, list[str]] = {}
    ids_seen: set[str] = set()
    for rec in pool:
        if rec["id"] in ids_seen:
            raise SamplerError(f"duplicate id in pool: {rec['id']!r}")
        ids_seen.add(rec["id"])
        if rec.get("topic_id") is None or rec["topic_id"] not in quotas:
            continue
        if rec["region"] not in regions:
            raise SamplerError(f"record {rec['id']!r} has unknown region {rec['region']!r}")
        by_stratum.setdefault(StratumKey(rec["topic_id"], rec["region"], rec["month"]), []).append(rec["id"])

    for topic_id, quota in sorted(quotas.items()):
        if quota <= 0:
            raise SamplerError(f"quota for topic {topic_id} must be positive")
        strata = [StratumKey(topic_id, r, m) for r in regions for m in months]
        targets = largest_remainder_targets(quota, strata, seed)
        members = {
            key: sorted(by_stratum.get(key, []), key=lambda rid: _draw_key(seed, key, rid)) for key in strata
        }
        achieved = {key: min(targets[key], len(members[key])) for key in strata}
        deficits = {key: targets[key] - achieved[key] for key in strata}
        total_deficit = sum(deficits.values())

        # move unmet demand to strata with spare capacity, fullest first
        requested = dict(targets)
        while total_deficit > 0:
            candidates = [(len(members[k]) - achieved[k], k) for k in strata if len(members[k]) > achieved[k]]
            if not candidates:
                break
            _, best = max(candidates, key=lambda c: (c[0], -strata.index(c[1])))
            achieved[best] += 1
            requested[best] = max(requested[best], achieved[best])
            total_deficit -= 1

        for key in strata:
            manifest.requested[key] = requested[key]
            manifest.achieved[key] = achieved[key]
            if deficits[key] > 0:
                manifest.shortfalls.append((key, deficits[key]))
            manifest.sampled_ids.extend(members[key][: achieved[key]])

        achieved_total = sum(achieved.values())
        manifest.topic_summary[topic_id] = {
            "quota": quota,
            "achieved": achieved_total,
            "unmet": quota - achieved_total,
        }
    return manifest


def verify_manifest(manifest: SampleManifest, pool: list[dict]) -> dict:
    """Re-check manifest invariants against the pool; returns pass/fail with
    every violation named."""
    violations: list[str] = []
    pool_by_id = {rec["id"]: rec for rec in pool}

    if len(set(manifest.sampled_ids)) != len(manifest.sampled_ids):
        violations.append("sampled_ids contains duplicates")
    for rid in manifest.sampled_ids:
        if rid not in pool_by_id:
            violations.append(f"sampled id {rid!r} not in pool")

    if sum(manifest.achieved.values()) != len(manifest.sampled_ids):
        violations.append("sum(achieved) != |sampled_ids|")

    for key, req in manifest.requested.items():
        if manifest.achieved.get(key, 0) > req:
            violations.append(f"achieved > requested for stratum {key}")

    # recount per stratum from the pool tags
    recount: dict[StratumKey, int] = {}
    for rid in manifest.sampled_ids:
        rec = pool_by_id.get(rid)
        if rec is None:
            continue
        key = StratumKey(rec["topic_id"], rec["region"], rec["month"])
        recount[key] = recount.get(key, 0) + 1
    for key, count in recount.items():
        if manifest.achieved.get(key, 0) != count:
            violations.append(f"achieved for {key} disagrees with pool recount")

    shortfall_topics = {key.topic_id for key, _ in manifest.shortfalls}
    topics = {key.topic_id for key in manifest.requested}
    for topic_id in topics:
        if topic_id in shortfall_topics:
            continue
        counts = [manifest.achieved[k] for k in manifest.achieved if k.topic_id == topic_id]
        if counts and max(counts) - min(counts) > 1:
            violations.append(f"uniformity gap > 1 for topic {topic_id} with no shortfalls")

    return {"ok": not violations, "violations": violations}


def load_quotas(path: str | Path) -> dict[int, int]:
    """Quota file: `topic_id<TAB>quota` lines, # comments allowed."""
    quotas: dict[int, int] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise SamplerError(f"quota line {line_no}: expected 'topic_id quota'")
        quotas[int(parts[0])] = int(parts[1])
    return quotas
