from __future__ import annotations

import random
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aporokit.ingest import (
    DEFAULT_PLACEHOLDER,
    IngestError,
    count_hashtags,
    default_query_terms,
    filter_records,
    ingest_records,
    load_records,
    load_records_detailed,
    mask_terms,
    match_query_terms,
    parse_timestamp,
)

from .conftest import make_record


class TestLoadRecords:
    def test_well_formed_file(self, raw_jsonl):
        path = raw_jsonl(
            [
                {"id": "1", "text": "a", "created_at": "2022-09-01T12:00:00Z"},
                {"id": "2", "text": "b", "created_at": "2022-09-02T12:00:00Z"},
                {"id": "3", "text": "c", "created_at": "2022-09-03T12:00:00Z"},
            ]
        )
        records = load_records(path)
        assert [r.id for r in records] == ["1", "2", "3"]
        assert records[0].masked_text == "" and records[0].matched_terms == []

    def test_missing_text_skipped_with_warning(self, raw_jsonl):
        path = raw_jsonl(
            [
                {"id": "1", "text": "a", "created_at": "2022-09-01T12:00:00Z"},
                {"id": "2", "created_at": "2022-09-02T12:00:00Z"},
                {"id": "3", "text": "c", "created_at": "2022-09-03T12:00:00Z"},
            ]
        )
        result = load_records_detailed(path, fail_fast=False)
        assert len(result.records) == 2
        assert len(result.skipped) == 1
        assert "text" in result.skipped[0][1]

    def test_missing_text_fail_fast(self, raw_jsonl):
        path = raw_jsonl([{"id": "2", "created_at": "2022-09-02T12:00:00Z"}])
        with pytest.raises(IngestError):
            load_records(path, fail_fast=True)

    def test_timestamp_parsed_to_utc_instant(self, raw_jsonl):
        path = raw_jsonl([{"id": "1", "text": "a", "created_at": "2022-09-01T12:00:00Z"}])
        (record,) = load_records(path)
        assert record.created_at == datetime(2022, 9, 1, 12, 0, 0, tzinfo=timezone.utc)

    def test_malformed_json_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "1", "text": "a", "created_at": "2022-09-01T12:00:00Z"}\n{oops\n')
        result = load_records_detailed(path)
        assert len(result.records) == 1
        assert result.skipped[0][0] == 2

    def test_csv_round(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("id,text,created_at\na,hello,2022-09-01T00:00:00Z\n")
        records = load_records(path, fmt="csv")
        assert records[0].text == "hello"

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_records(tmp_path / "nope.jsonl")


class TestFilterRecords:
    def test_six_hashtags_rejected(self):
        rec = make_record(text="x #a #b #c #d #e #f")
        assert rec.hashtag_count == 6
        kept, log = filter_records([rec])
        assert kept == [] and log["hashtags"] == 1

    def test_five_hashtags_kept(self):
        kept, _ = filter_records([make_record(text="x #a #b #c #d #e")])
        assert len(kept) == 1

    def test_bot_screen_name_rejected(self):
        kept, log = filter_records([make_record(screen_name="NewsBot_Daily")])
        assert kept == [] and log["bot_name"] == 1

    def test_bot_user_name_rejected(self):
        _, log = filter_records([make_record(user_name="Robot Overlord")])
        assert log["bot_name"] == 1

    def test_case_duplicate_rejected(self):
        a = make_record(id="a", text="Poor People Need Help")
        b = make_record(id="b", text="poor people  need help")
        kept, log = filter_records([a, b])
        assert [r.id for r in kept] == ["a"] and log["duplicate"] == 1

    def test_retweets_and_urls(self):
        kept, log = filter_records(
            [
                make_record(id="a", is_retweet=True),
                make_record(id="b", text="see https://example.com now"),
                make_record(id="c", text="fine"),
            ]
        )
        assert [r.id for r in kept] == ["c"]
        assert log["retweet"] == 1 and log["url"] == 1

    def test_counts_partition_input(self):
        rng = random.Random(5)
        records = []
        for i in range(200):
            text = f"text {rng.randrange(60)}"
            records.append(
                make_record(
                    id=str(i),
                    text=text + (" https://x.io" if rng.random() < 0.2 else "")
                    + (" #a #b #c #d #e #f" if rng.random() < 0.2 else ""),
                    is_retweet=rng.random() < 0.15,
                    screen_name="bot" if rng.random() < 0.1 else "user",
                )
            )
        kept, log = filter_records(records)
        assert len(kept) + sum(log.values()) == len(records)

    def test_idempotent(self):
        records = [
            make_record(id="a", text="one"),
            make_record(id="b", text="ONE"),
            make_record(id="c", text="two #a #b #c #d #e #f"),
            make_record(id="d", text="three", is_retweet=True),
            make_record(id="e", text="four"),
        ]
        once, _ = filter_records(records)
        twice, log = filter_records(once)
        assert [r.id for r in twice] == [r.id for r in once]
        assert sum(log.values()) == 0

    def test_empty_input(self):
        kept, log = filter_records([])
        assert kept == [] and sum(log.values()) == 0


class TestQueryTerms:
    def test_twelve_terms_one_noun_only(self):
        terms = default_query_terms()
        assert len(terms.terms) == 12
        noun_only = [t for t in terms if t.noun_only]
        assert [t.surface for t in noun_only] == ["the poor"]

    def test_the_poor_as_noun(self):
        matches = match_query_terms("help the poor.")
        assert [m[0] for m in matches] == ["the-poor"]

    def test_the_poor_as_adjective(self):
        assert match_query_terms("the poor performance of the team") == []

    def test_poor_people_surface(self):
        matches = match_query_terms("Poor people deserve dignity")
        assert [m[0] for m in matches] == ["poor-people"]

    def test_noun_follower_closed_class(self):
        assert match_query_terms("the poor are struggling")[0][0] == "the-poor"
        assert match_query_terms("the poor in this city")[0][0] == "the-poor"

    def test_case_insensitive_token_boundary(self):
        assert match_query_terms("HOMELESS people")[0][0] == "homeless"
        # no match inside a larger word
        assert match_query_terms("homelessness is rising") == []

    def test_leftmost_longest_non_overlapping(self):
        matches = match_query_terms("the poor people of this town")
        # "the poor" fails the noun test ("people" is open-class), so
        # "poor people" wins at the next position
        assert [m[0] for m in matches] == ["poor-people"]
        spans = [m[1] for m in matches]
        assert all(s2[0] >= s1[1] for s1, s2 in zip(spans, spans[1:]))


class TestMasking:
    def test_substitution(self):
        rec = make_record(text="the homeless need help")
        mask_terms(rec, match_query_terms(rec.text))
        assert rec.masked_text == "the [GROUP] need help"
        assert rec.matched_terms == ["homeless"]
        assert rec.text == "the homeless need help"

    def test_zero_matches_identity(self):
        rec = make_record(text="nothing to see here")
        mask_terms(rec, [])
        assert rec.masked_text == rec.text

    def test_two_matches_two_placeholders(self):
        rec = make_record(text="homeless today, homeless tomorrow")
        mask_terms(rec, match_query_terms(rec.text))
        assert rec.masked_text.count(DEFAULT_PLACEHOLDER) == 2

    def test_overlapping_spans_rejected(self):
        rec = make_record(text="abcdef")
        with pytest.raises(IngestError):
            mask_terms(rec, [("x", (0, 3)), ("y", (2, 5))])

    def test_out_of_bounds_rejected(self):
        rec = make_record(text="abc")
        with pytest.raises(IngestError):
            mask_terms(rec, [("x", (1, 9))])

    def test_bytes_outside_spans_preserved(self):
        text = "aid the poor; fund poor people today"
        rec = make_record(text=text)
        matches = match_query_terms(text)
        mask_terms(rec, matches)
        # strip placeholders back out and compare the remains
        remains = rec.masked_text.split(DEFAULT_PLACEHOLDER)
        cursor = 0
        rebuilt = []
        for _, (start, end) in sorted(matches, key=lambda m: m[1][0]):
            rebuilt.append(text[cursor:start])
            cursor = end
        rebuilt.append(text[cursor:])
        assert remains == rebuilt

    @settings(max_examples=60)
    @given(
        st.lists(
            st.sampled_from(
                ["homeless", "poor people", "the poor", "budget", "rain", "on welfare", "story", "low-income"]
            ),
            min_size=1,
            max_size=12,
        )
    )
    def test_placeholder_count_equals_match_count(self, words: list[str]):
        text = " ".join(words) + "."
        rec = make_record(text=text)
        matches = match_query_terms(text)
        mask_terms(rec, matches)
        assert rec.masked_text.count(DEFAULT_PLACEHOLDER) == len(matches)
        assert len(rec.matched_terms) == len(matches)


def test_ingest_records_pipeline():
    records = [
        make_record(id="a", text="help the homeless now"),
        make_record(id="b", text="spam https://spam.example"),
    ]
    kept, rejections = ingest_records(records)
    assert [r.id for r in kept] == ["a"]
    assert kept[0].masked_text == "help the [GROUP] now"
    assert rejections["url"] == 1


def test_count_hashtags_literal():
    assert count_hashtags("a #b c #d") == 2
    assert count_hashtags("no tags") == 0


def test_parse_timestamp_variants():
    assert parse_timestamp("2022-09-01T12:00:00Z") == parse_timestamp("2022-09-01T12:00:00+00:00")
    assert parse_timestamp("2022-09-01T14:00:00+02:00") == parse_timestamp("2022-09-01T12:00:00Z")
    with pytest.raises(IngestError):
        parse_timestamp("not a time")
