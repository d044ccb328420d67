"""Three-level taxonomy of aporophobic actions expressed through speech:
speech type, severity-ordered degree of action, and fine-grained category
themes, plus cross-cutting bias aggravators.

Speech that directly voices the author's own prejudice can only realize the
two mildest degrees (antilocution, avoidance/fear); the heavier degrees
(discrimination, physical attack, extermination) happen offline and can
only be reported on, so they are valid solely under Reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path


class TaxonomyError(Exception):
    pass


class SpeechType(str, Enum):
    DIRECT = "Direct"
    REPORTING = "Reporting"


class DegreeOfAction(str, Enum):
    ANTILOCUTION = "Antilocution"
    AVOIDANCE_FEAR = "AvoidanceFear"
    DISCRIMINATION = "Discrimination"
    PHYSICAL_ATTACK = "PhysicalAttack"
    EXTERMINATION = "Extermination"

    @property
    def severity(self) -> int:
        return list(DegreeOfAction).index(self)


DIRECT_DEGREES = frozenset({DegreeOfAction.ANTILOCUTION, DegreeOfAction.AVOIDANCE_FEAR})


class Aggravator(str, Enum):
    RACISM = "Racism"
    XENOPHOBIA = "Xenophobia"
    SEXISM = "Sexism"
    OTHER = "Other"


@dataclass(frozen=True)
class FineCategory:
    id: str
    degree: DegreeOfAction
    description: str


@dataclass
class Catalog:
    categories: dict[str, FineCategory] = field(default_factory=dict)

    def add(self, category: FineCategory) -> None:
        if category.id in self.categories:
            raise TaxonomyError(f"duplicate category id {category.id!r}")
        self.categories[category.id] = category

    def __len__(self) -> int:
        return len(self.categories)

    def __contains__(self, category_id: str) -> bool:
        return category_id in self.categories


@dataclass
class TaxonomyAssignment:
    item_id: str
    speech_type: SpeechType
    degree: DegreeOfAction
    categories: set[str] = field(default_factory=set)
    aggravators: set[Aggravator] = field(default_factory=set)


def validate_assignment(assignment: TaxonomyAssignment, catalog: Catalog) -> list[str]:
    """Check every structural rule; returns all violations (empty means ok)."""
    violations: list[str] = []
    if assignment.speech_type is SpeechType.DIRECT and assignment.degree not in DIRECT_DEGREES:
        violations.append(
            f"degree {assignment.degree.value} is only valid under Reporting, not Direct"
        )
    for category_id in sorted(assignment.categories):
        category = catalog.categories.get(category_id)
        if category is None:
            violations.append(f"unknown category id {category_id!r}")
        elif category.degree is not assignment.degree:
            violations.append(
                f"category {category_id!r} carries degree {category.degree.value}, "
                f"assignment says {assignment.degree.value}"
            )
    return violations


def parse_catalog(text: str) -> Catalog:
    catalog = Catalog()
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split("\t")
        if len(parts) != 3:
            raise TaxonomyError(f"catalog line {line_no}: expected 'id<TAB>degree<TAB>description'")
        cat_id, degree_name, description = (p.strip() for p in parts)
        try:
            degree = DegreeOfAction(degree_name)
        except ValueError as exc:
            raise TaxonomyError(f"catalog line {line_no}: unknown degree {degree_name!r}") from exc
        catalog.add(FineCategory(cat_id, degree, description))
    if not catalog.categories:
        import logging

        logging.getLogger(__name__).warning("parsed an empty catalog")
    return catalog


def dumps_catalog(catalog: Catalog) -> str:
    """Canonical serialization: header comment, then rows sorted by
    (severity, id). The canonical form of a canonical file is itself."""
    lines = ["# Fine-grained category catalog: id<TAB>degree<TAB>description"]
    ordered = sorted(catalog.categories.values(), key=lambda c: (c.degree.severity, c.id))
    for cat in ordered:
        lines.append(f"{cat.id}\t{cat.degree.value}\t{cat.description}")
    return "\n".join(lines) + "\n"


def load_catalog(path: str | Path | None = None) -> Catalog:
    """Load the category catalog from `id<TAB>degree<TAB>description` lines."""
    if path is None:
        text = resources.files("aporokit").joinpath("data/taxonomy_catalog.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_catalog(text)


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    Path(path).write_text(dumps_catalog(catalog), encoding="utf-8")


def catalog_roundtrip(path: str | Path) -> Catalog:
    """Load a catalog and prove serialization round-trips it losslessly."""
    catalog = load_catalog(path)
    reparsed = parse_catalog(dumps_catalog(catalog))
    if reparsed.categories != catalog.categories:
        raise TaxonomyError("catalog does not survive a serialization round-trip")
    return catalog
