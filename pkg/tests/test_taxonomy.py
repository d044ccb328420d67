from __future__ import annotations

from itertools import product

import pytest

from aporokit.taxonomy import (
    Aggravator,
    Catalog,
    DegreeOfAction,
    FineCategory,
    SpeechType,
    TaxonomyAssignment,
    TaxonomyError,
    catalog_roundtrip,
    dumps_catalog,
    load_catalog,
    parse_catalog,
    save_catalog,
    validate_assignment,
)

PACKAGED_CATALOG = None


@pytest.fixture(scope="module")
def catalog() -> Catalog:
    return load_catalog()


def assignment(speech, degree, categories=(), aggravators=()):
    return TaxonomyAssignment(
        item_id="t1",
        speech_type=speech,
        degree=degree,
        categories=set(categories),
        aggravators=set(aggravators),
    )


class TestValidateAssignment:
    def test_direct_discrimination_rejected(self, catalog):
        violations = validate_assignment(
            assignment(SpeechType.DIRECT, DegreeOfAction.DISCRIMINATION), catalog
        )
        assert violations and "Reporting" in violations[0]

    def test_reporting_physical_attack_ok(self, catalog):
        violations = validate_assignment(
            assignment(
                SpeechType.REPORTING,
                DegreeOfAction.PHYSICAL_ATTACK,
                categories={"physical-attack-incidents"},
            ),
            catalog,
        )
        assert violations == []

    def test_direct_antilocution_with_aggravator_ok(self, catalog):
        violations = validate_assignment(
            assignment(
                SpeechType.DIRECT,
                DegreeOfAction.ANTILOCUTION,
                categories={"addiction"},
                aggravators={Aggravator.XENOPHOBIA},
            ),
            catalog,
        )
        assert violations == []

    def test_unknown_category_violation(self, catalog):
        violations = validate_assignment(
            assignment(SpeechType.REPORTING, DegreeOfAction.ANTILOCUTION, categories={"flying-cars"}),
            catalog,
        )
        assert any("unknown" in v for v in violations)

    def test_category_degree_mismatch(self, catalog):
        violations = validate_assignment(
            assignment(SpeechType.REPORTING, DegreeOfAction.DISCRIMINATION, categories={"addiction"}),
            catalog,
        )
        assert any("addiction" in v for v in violations)

    def test_all_violations_reported(self, catalog):
        violations = validate_assignment(
            assignment(
                SpeechType.DIRECT,
                DegreeOfAction.PHYSICAL_ATTACK,
                categories={"addiction", "no-such-thing"},
            ),
            catalog,
        )
        assert len(violations) == 3  # speech/degree rule + bad degree + unknown id

    def test_exhaustive_speech_degree_grid(self, catalog):
        valid = 0
        for speech, degree in product(SpeechType, DegreeOfAction):
            if not validate_assignment(assignment(speech, degree), catalog):
                valid += 1
        assert valid == 7  # 2 Direct degrees + all 5 Reporting degrees

    def test_extermination_allowed_with_empty_categories(self, catalog):
        assert validate_assignment(assignment(SpeechType.REPORTING, DegreeOfAction.EXTERMINATION), catalog) == []


class TestCatalog:
    def test_packaged_catalog_has_fourteen_categories(self, catalog):
        assert len(catalog) == 14

    def test_theme_coverage(self, catalog):
        expected = {
            "laziness-resource-abuse",
            "addiction",
            "mental-illness",
            "crime-association",
            "criminalization",
            "hygiene",
            "exclusion-ostracism",
            "fear-of-poor",
            "fear-of-being-poor",
            "bullying-blame",
            "over-policing",
            "law-regulation-enforcement",
            "military-service",
            "physical-attack-incidents",
        }
        assert set(catalog.categories) == expected

    def test_degree_distribution(self, catalog):
        by_degree = {}
        for cat in catalog.categories.values():
            by_degree[cat.degree] = by_degree.get(cat.degree, 0) + 1
        assert by_degree == {
            DegreeOfAction.ANTILOCUTION: 6,
            DegreeOfAction.AVOIDANCE_FEAR: 3,
            DegreeOfAction.DISCRIMINATION: 4,
            DegreeOfAction.PHYSICAL_ATTACK: 1,
        }

    def test_shipped_file_is_canonical(self):
        from importlib import resources

        raw = resources.files("aporokit").joinpath("data/taxonomy_catalog.txt").read_text("utf-8")
        assert dumps_catalog(parse_catalog(raw)) == raw

    def test_roundtrip_via_files(self, tmp_path, catalog):
        path = tmp_path / "catalog.txt"
        save_catalog(catalog, path)
        first = path.read_bytes()
        again = catalog_roundtrip(path)
        save_catalog(again, path)
        assert path.read_bytes() == first

    def test_empty_catalog_warns(self, tmp_path, caplog):
        path = tmp_path / "empty.txt"
        path.write_text("# nothing\n")
        with caplog.at_level("WARNING"):
            catalog = load_catalog(path)
        assert len(catalog) == 0

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "dup.txt"
        path.write_text("a\tAntilocution\tfirst\na\tAntilocution\tsecond\n")
        with pytest.raises(TaxonomyError):
            load_catalog(path)

    def test_unknown_degree_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("a\tSuperBad\tdesc\n")
        with pytest.raises(TaxonomyError):
            load_catalog(path)

    def test_severity_order(self):
        order = [d.severity for d in DegreeOfAction]
        assert order == [0, 1, 2, 3, 4]
        assert DegreeOfAction.ANTILOCUTION.severity < DegreeOfAction.EXTERMINATION.severity

    def test_catalog_add_guards_duplicates(self):
        catalog = Catalog()
        catalog.add(FineCategory("x", DegreeOfAction.ANTILOCUTION, "d"))
        with pytest.raises(TaxonomyError):
            catalog.add(FineCategory("x", DegreeOfAction.DISCRIMINATION, "d2"))
