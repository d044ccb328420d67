"""Region resolution from post location fields via gazetteer string matching.

The tweet-level place country wins when known; otherwise the free-form user
location string is matched against three tiers in priority order
(countries > subdivisions > cities), longest surface first within a tier.
Anything unresolved lands in Other.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .ingest import PostRecord


class Region(str, Enum):
    NORTH_AMERICA = "NorthAmerica"
    EUROPE = "Europe"
    AFRICA = "Africa"
    SOUTH_ASIA = "SouthAsia"
    OCEANIA = "Oceania"
    OTHER = "Other"


REGIONS = [r.value for r in Region]

_TIERS = ("country", "subdivision", "city")


@dataclass
class Gazetteer:
    """Surface-form lookup tables per tier.

    Keys are casefolded surfaces. Two-letter code entries are kept separately:
    they only match as standalone comma/space-delimited tokens (uppercase, or
    any case directly after a comma as in "austin, tx"), so that English stop
    words never hit state codes like IN, OR, ME, HI.
    """

    names: dict[str, dict[str, Region]] = field(default_factory=lambda: {t: {} for t in _TIERS})
    codes: dict[str, dict[str, Region]] = field(default_factory=lambda: {t: {} for t in _TIERS})
    _patterns: dict = field(default_factory=dict, repr=False)

    def add(self, surface: str, tier: str, region: Region) -> None:
        if tier not in _TIERS:
            raise ValueError(f"unknown gazetteer tier {tier!r}")
        surface = surface.strip()
        if re.fullmatch(r"[A-Za-z]{2}", surface):
            self.codes[tier][surface.upper()] = region
        else:
            self.names[tier][surface.casefold()] = region
        self._patterns.pop(tier, None)

    def _tier_pattern(self, tier: str) -> re.Pattern | None:
        if tier not in self._patterns:
            surfaces = sorted(self.names[tier], key=len, reverse=True)
            if surfaces:
                alt = "|".join(re.escape(s) for s in surfaces)
                self._patterns[tier] = re.compile(rf"\b(?:{alt})\b", re.IGNORECASE)
            else:
                self._patterns[tier] = None
        return self._patterns[tier]

    def lookup_country(self, name: str) -> Region | None:
        name = name.strip()
        hit = self.names["country"].get(name.casefold())
        if hit is None:
            hit = self.codes["country"].get(name.upper())
        return hit

    def match_freeform(self, location: str) -> Region | None:
        """First hit wins within a tier; tiers tried country > subdivision > city."""
        tokens = [t for t in re.split(r"[,\s]+", location) if t]
        after_comma = set()
        for m in re.finditer(r",\s*([^\s,]+)", location):
            after_comma.add(m.group(1))
        for tier in _TIERS:
            pattern = self._tier_pattern(tier)
            if pattern:
                m = pattern.search(location)
                if m:
                    return self.names[tier][m.group(0).casefold()]
            codes = self.codes[tier]
            if codes:
                for tok in tokens:
                    if tok in codes:
                        return codes[tok]
                for tok in after_comma:
                    if tok.upper() in codes:
                        return codes[tok.upper()]
        return None


def load_gazetteer(path: str | Path | None = None) -> Gazetteer:
    """Load the gazetteer from its structured text file (surface<TAB>tier<TAB>region).

    Lines starting with # are comments. Defaults to the packaged file.
    """
    if path is None:
        text = resources.files("aporokit").joinpath("data/gazetteer.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    gaz = Gazetteer()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 3:
            raise ValueError(f"gazetteer line {line_no}: expected 'surface<TAB>tier<TAB>region'")
        surface, tier, region_name = parts
        try:
            region = Region(region_name)
        except ValueError as exc:
            raise ValueError(f"gazetteer line {line_no}: unknown region {region_name!r}") from exc
        gaz.add(surface, tier, region)
    return gaz


def resolve_region(record: PostRecord, gaz: Gazetteer) -> Region:
    """Total, deterministic mapping of a record to exactly one region."""
    if record.place_country:
        region = gaz.lookup_country(record.place_country)
        if region is not None:
            return region
    if record.user_location_raw:
        region = gaz.match_freeform(record.user_location_raw)
        if region is not None:
            return region
    return Region.OTHER


def tag_regions(records: list[PostRecord], gaz: Gazetteer) -> list[PostRecord]:
    for rec in records:
        rec.region = resolve_region(rec, gaz).value
    return records


def region_distribution(records: list[PostRecord]) -> dict:
    """Counts and fractions per region; fractions sum to 1 for non-empty input."""
    counts = {r: 0 for r in REGIONS}
    gaz: Gazetteer | None = None
    for rec in records:
        if rec.region is None:
            if gaz is None:
                gaz = load_gazetteer()
            rec.region = resolve_region(rec, gaz).value
        counts[rec.region] += 1
    total = sum(counts.values())
    fractions = {r: (counts[r] / total if total else 0.0) for r in REGIONS}
    return {"counts": counts, "fractions": fractions, "total": total}
