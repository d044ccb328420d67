from __future__ import annotations

import random

import pytest

from aporokit.geo import REGIONS
from aporokit.sampler import (
    SampleManifest,
    SamplerError,
    StratumKey,
    largest_remainder_targets,
    load_quotas,
    stratified_sample,
    verify_manifest,
)

MONTHS = ["2022-09", "2022-10", "2022-11"]


def build_pool(per_stratum: dict[tuple[str, str], int] | int, topic_id: int = 1, prefix: str = "p"):
    pool = []
    i = 0
    for region in REGIONS:
        for month in MONTHS:
            count = per_stratum if isinstance(per_stratum, int) else per_stratum.get((region, month), 0)
            for _ in range(count):
                pool.append({"id": f"{prefix}{topic_id}_{i}", "topic_id": topic_id, "region": region, "month": month})
                i += 1
    return pool


class TestStratifiedSample:
    def test_abundant_exact_quota_split(self):
        pool = build_pool(20)
        manifest = stratified_sample(pool, {1: 90}, seed=17)
        assert set(manifest.achieved.values()) == {5}
        assert len(manifest.sampled_ids) == 90
        assert manifest.shortfalls == []

    def test_empty_stratum_redistribution(self):
        # 18 strata, quota 18, one stratum empty: 16 strata give 1, one gives 2,
        # total conserved at 18, one shortfall of 1 logged
        per = {(r, m): 3 for r in REGIONS for m in MONTHS}
        per[("Other", "2022-11")] = 0
        pool = build_pool(per)
        manifest = stratified_sample(pool, {1: 18}, seed=17)
        assert len(manifest.sampled_ids) == 18
        values = sorted(manifest.achieved.values())
        assert values.count(0) == 1 and values.count(1) == 16 and values.count(2) == 1
        assert manifest.shortfalls == [(StratumKey(1, "Other", "2022-11"), 1)]

    def test_quota_above_pool_samples_all(self):
        pool = build_pool(2)  # 36 records
        manifest = stratified_sample(pool, {1: 100}, seed=3)
        assert sorted(manifest.sampled_ids) == sorted(p["id"] for p in pool)
        assert manifest.topic_summary[1]["unmet"] == 100 - 36
        assert manifest.shortfalls  # deficits were logged

    def test_empty_pool(self):
        manifest = stratified_sample([], {1: 10}, seed=1)
        assert manifest.sampled_ids == []

    def test_determinism(self):
        pool = build_pool(10)
        first = stratified_sample(pool, {1: 54}, seed=29)
        for _ in range(5):
            again = stratified_sample(pool, {1: 54}, seed=29)
            assert again.sampled_ids == first.sampled_ids

    def test_seed_changes_sample(self):
        pool = build_pool(10)
        a = stratified_sample(pool, {1: 54}, seed=1)
        b = stratified_sample(pool, {1: 54}, seed=2)
        assert a.sampled_ids != b.sampled_ids

    def test_pool_order_irrelevant(self):
        pool = build_pool(10)
        shuffled = list(pool)
        random.Random(0).shuffle(shuffled)
        assert (
            stratified_sample(pool, {1: 54}, seed=4).sampled_ids
            == stratified_sample(shuffled, {1: 54}, seed=4).sampled_ids
        )

    def test_stability_under_removal_of_unsampled(self):
        pool = build_pool(12)
        manifest = stratified_sample(pool, {1: 72}, seed=8)
        sampled = set(manifest.sampled_ids)
        survivors = [p for p in pool if p["id"] in sampled or random.Random(p["id"]).random() < 0.5]
        again = stratified_sample(survivors, {1: 72}, seed=8)
        assert again.sampled_ids == manifest.sampled_ids

    def test_uniform_by_construction(self):
        pool = build_pool(25)
        manifest = stratified_sample(pool, {1: 90}, seed=13)
        by_region: dict[str, int] = {}
        by_month: dict[str, int] = {}
        for key, count in manifest.achieved.items():
            by_region[key.region] = by_region.get(key.region, 0) + count
            by_month[key.month] = by_month.get(key.month, 0) + count
        assert set(by_region.values()) == {15}
        assert set(by_month.values()) == {30}

    def test_output_subset_no_duplicates(self):
        pool = build_pool(6)
        manifest = stratified_sample(pool, {1: 70}, seed=2)
        ids = manifest.sampled_ids
        assert len(set(ids)) == len(ids)
        assert set(ids) <= {p["id"] for p in pool}

    def test_multi_topic_quotas(self):
        pool = build_pool(10, topic_id=1) + build_pool(10, topic_id=2, prefix="q")
        manifest = stratified_sample(pool, {1: 36, 2: 18}, seed=6)
        assert manifest.topic_summary[1]["achieved"] == 36
        assert manifest.topic_summary[2]["achieved"] == 18

    def test_bad_inputs(self):
        pool = build_pool(2)
        with pytest.raises(SamplerError):
            stratified_sample(pool, {1: 0}, seed=1)
        with pytest.raises(SamplerError):
            stratified_sample(pool + [pool[0]], {1: 5}, seed=1)
        with pytest.raises(SamplerError):
            stratified_sample([{"id": "x", "topic_id": 1, "region": "Mars", "month": "2022-09"}], {1: 1}, seed=1)

    def test_reference_scale_quotas_with_scarcity(self):
        # fifteen topics, five broad at 250 and ten at 100, over strata whose
        # sparse regions cannot fill their share: lands well short of the
        # 2,250 ceiling but in the right neighborhood of the reference run
        rng = random.Random(42)
        quotas = {t: 250 for t in (5, 6, 10, 14, 67)}
        quotas.update({t: 100 for t in (38, 49, 56, 88, 91, 96, 100, 106, 118, 139)})
        pool = []
        i = 0
        for topic in quotas:
            for region in REGIONS:
                for month in MONTHS:
                    rich = region in ("Other", "NorthAmerica", "Europe")
                    count = rng.randint(20, 60) if rich else rng.randint(0, 7)
                    for _ in range(count):
                        pool.append({"id": f"m{i}", "topic_id": topic, "region": region, "month": month})
                        i += 1
        manifest = stratified_sample(pool, quotas, seed=17)
        total = len(manifest.sampled_ids)
        assert 1500 <= total < 2250
        assert manifest.shortfalls
        assert verify_manifest(manifest, pool)["ok"]


class TestVerifyManifest:
    def test_pass_on_abundant(self):
        pool = build_pool(20)
        manifest = stratified_sample(pool, {1: 90}, seed=17)
        report = verify_manifest(manifest, pool)
        assert report["ok"] and report["violations"] == []

    def test_duplicate_id_fails(self):
        pool = build_pool(20)
        manifest = stratified_sample(pool, {1: 36}, seed=17)
        manifest.sampled_ids.append(manifest.sampled_ids[0])
        report = verify_manifest(manifest, pool)
        assert not report["ok"]
        assert any("duplicate" in v for v in report["violations"])

    def test_foreign_id_fails(self):
        pool = build_pool(5)
        manifest = stratified_sample(pool, {1: 18}, seed=17)
        manifest.sampled_ids[0] = "ghost"
        assert not verify_manifest(manifest, pool)["ok"]

    def test_uniformity_gap_detected(self):
        pool = build_pool(20)
        manifest = stratified_sample(pool, {1: 90}, seed=17)
        key = next(iter(manifest.achieved))
        manifest.achieved[key] += 2
        manifest.requested[key] += 2
        report = verify_manifest(manifest, pool)
        assert not report["ok"]

    def test_randomized_pools_always_pass(self):
        rng = random.Random(7)
        for trial in range(300):
            per = {(r, m): rng.randint(0, 6) for r in REGIONS for m in MONTHS}
            pool = build_pool(per)
            quota = rng.randint(1, 40)
            manifest = stratified_sample(pool, {1: quota}, seed=trial)
            assert verify_manifest(manifest, pool)["ok"], trial
            assert len(manifest.sampled_ids) == min(quota, len(pool))


def test_largest_remainder_exactness():
    strata = [StratumKey(1, r, m) for r in REGIONS for m in MONTHS]
    for quota in (1, 17, 18, 19, 90, 100):
        targets = largest_remainder_targets(quota, strata, seed=5)
        assert sum(targets.values()) == quota
        assert max(targets.values()) - min(targets.values()) <= 1


def test_manifest_roundtrip(tmp_path):
    pool = build_pool(8)
    manifest = stratified_sample(pool, {1: 36}, seed=9)
    path = tmp_path / "manifest.json"
    manifest.save(path)
    loaded = SampleManifest.load(path)
    assert loaded.sampled_ids == manifest.sampled_ids
    assert loaded.achieved == manifest.achieved
    assert loaded.shortfalls == manifest.shortfalls
    assert verify_manifest(loaded, pool)["ok"]


def test_load_quotas(tmp_path):
    path = tmp_path / "quotas.txt"
    path.write_text("# comment\n5\t250\n38 100\n")
    assert load_quotas(path) == {5: 250, 38: 100}
    bad = tmp_path / "bad.txt"
    bad.write_text("5\n")
    with pytest.raises(SamplerError):
        load_quotas(bad)
