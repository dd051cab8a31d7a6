import logging
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilefuse.fusion import (
    CategoryScope,
    FusionMode,
    FusionParams,
    OverlapMetric,
    fuse,
    group_regions,
    merge_group,
    nms_select,
    weighted_merge,
)
from tilefuse.geometry import (
    BBox,
    Region,
    intersection_score,
    iou,
    region_sort_key,
    sort_regions,
)


def brute_force_nms(regions, params):
    """Quadratic reference: repeatedly keep the best-confidence survivor and
    suppress everything overlapping it beyond sigma."""
    overlap = iou if params.metric is OverlapMetric.IOU else intersection_score
    remaining = sort_regions(regions)
    kept = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        survivors = []
        for r in remaining:
            same_scope = (
                params.category_scope is CategoryScope.CATEGORY_AGNOSTIC
                or r.category == best.category
            )
            if same_scope and overlap(best.box, r.box) > params.sigma:
                continue
            survivors.append(r)
        remaining = survivors
    return kept


def random_instance(rng, n_max=64):
    n = rng.randint(1, n_max)
    regions = []
    for _ in range(n):
        x1 = rng.uniform(0, 200)
        y1 = rng.uniform(0, 200)
        w = rng.uniform(2, 80)
        h = rng.uniform(2, 80)
        regions.append(
            Region(
                BBox(x1, y1, x1 + w, y1 + h),
                category=rng.randint(1, 5),
                confidence=round(rng.random(), 3),
            )
        )
    return regions


# Three regions echoing the worked overlap example: an isolated high-scoring
# one plus an overlapping 0.7/0.8 pair.
def trio():
    r2 = Region(BBox(200, 200, 260, 240), 3, 0.9)
    r1 = Region(BBox(10, 10, 24, 31), 3, 0.7)
    r3 = Region(BBox(11, 19, 21, 30), 3, 0.8)
    return r1, r2, r3


class TestGroupRegions:
    def test_isolated_plus_overlapping_pair(self):
        r1, r2, r3 = trio()
        params = FusionParams(sigma=0.5, metric=OverlapMetric.INTERSECTION_SCORE)
        groups = group_regions([r1, r2, r3], params)
        assert len(groups) == 2
        assert groups[0].members == (r2,)
        assert groups[1].seed == r3
        assert set(groups[1].members) == {r1, r3}

    def test_disjoint_input_gives_singletons(self):
        regions = [
            Region(BBox(i * 100, 0, i * 100 + 10, 10), 1, 0.5 + i / 100) for i in range(5)
        ]
        groups = group_regions(regions, FusionParams())
        assert all(len(g.members) == 1 for g in groups)
        assert len(groups) == 5

    def test_sigma_controls_grouping(self):
        a = Region(BBox(0, 0, 10, 10), 1, 0.9)
        b = Region(BBox(5, 0, 15, 10), 1, 0.8)  # IoU exactly 1/3
        assert len(group_regions([a, b], FusionParams(sigma=0.5))) == 2
        assert len(group_regions([a, b], FusionParams(sigma=0.3))) == 1

    def test_per_category_scope_separates(self):
        a = Region(BBox(0, 0, 10, 10), 1, 0.9)
        b = Region(BBox(0, 0, 10, 10), 2, 0.8)
        assert len(group_regions([a, b], FusionParams(sigma=0.5))) == 2
        agnostic = FusionParams(sigma=0.5, category_scope=CategoryScope.CATEGORY_AGNOSTIC)
        assert len(group_regions([a, b], agnostic)) == 1

    def test_partition_property(self):
        rng = random.Random(4)
        for _ in range(25):
            regions = random_instance(rng, 40)
            groups = group_regions(regions, FusionParams(sigma=0.4))
            members = [m for g in groups for m in g.members]
            assert sorted(map(region_sort_key, members)) == sorted(
                map(region_sort_key, regions)
            )
            assert sum(len(g.members) for g in groups) == len(regions)

    def test_seed_dominance(self):
        rng = random.Random(5)
        for _ in range(25):
            groups = group_regions(random_instance(rng, 40), FusionParams(sigma=0.3))
            for g in groups:
                assert all(m.confidence <= g.seed.confidence for m in g.members)


class TestNmsSelect:
    def test_trio_keeps_isolated_and_best(self):
        r1, r2, r3 = trio()
        params = FusionParams(sigma=0.5, metric=OverlapMetric.INTERSECTION_SCORE)
        selected = nms_select(group_regions([r1, r2, r3], params))
        assert selected == [r2, r3]

    def test_singletons_unchanged(self):
        regions = [Region(BBox(i * 50, 0, i * 50 + 10, 10), 1, 0.5) for i in range(4)]
        selected = nms_select(group_regions(regions, FusionParams()))
        assert sort_regions(selected) == sort_regions(regions)

    def test_never_alters_any_region(self):
        rng = random.Random(6)
        regions = random_instance(rng, 50)
        selected = fuse(regions, FusionParams(mode=FusionMode.SELECT, sigma=0.4))
        pool = set(map(region_sort_key, regions))
        assert all(region_sort_key(r) in pool for r in selected)


class TestWeightedMerge:
    def test_golden_two_member_merge(self):
        group = group_regions(
            [
                Region(BBox(10, 10, 20, 20), 1, 0.7),
                Region(BBox(12, 12, 22, 22), 1, 0.8),
            ],
            FusionParams(sigma=0.3),
        )
        assert len(group) == 1
        merged = merge_group(group[0])
        expected = (166 / 15, 166 / 15, 316 / 15, 316 / 15)  # (11.0667, ..., 21.0667)
        for got, want in zip(merged.box.as_tuple(), expected):
            assert got == pytest.approx(want, abs=1e-9)
        assert merged.confidence == 0.8
        assert merged.category == 1

    def test_singleton_identity(self):
        r = Region(BBox(5, 6, 9, 12), 4, 0.42)
        merged = weighted_merge(group_regions([r], FusionParams()))
        assert merged == [r]

    def test_equal_weights_is_arithmetic_mean(self):
        a = Region(BBox(0, 0, 10, 10), 1, 0.6)
        b = Region(BBox(4, 4, 14, 14), 1, 0.6)
        merged = merge_group(group_regions([a, b], FusionParams(sigma=0.1))[0])
        assert merged.box.as_tuple() == pytest.approx((2, 2, 12, 12))

    def test_zero_total_weight_falls_back_to_mean(self, caplog):
        a = Region(BBox(0, 0, 10, 10), 1, 0.0)
        b = Region(BBox(4, 4, 14, 14), 1, 0.0)
        with caplog.at_level(logging.WARNING, logger="tilefuse.fusion"):
            merged = merge_group(group_regions([a, b], FusionParams(sigma=0.1))[0])
        assert merged.box.as_tuple() == pytest.approx((2, 2, 12, 12))
        assert any("zero confidence" in r.message for r in caplog.records)

    def test_hull_containment(self):
        rng = random.Random(8)
        for _ in range(25):
            regions = random_instance(rng, 40)
            for g in group_regions(regions, FusionParams(sigma=0.3)):
                merged = merge_group(g)
                assert merged.box.x1 >= min(m.box.x1 for m in g.members) - 1e-9
                assert merged.box.y1 >= min(m.box.y1 for m in g.members) - 1e-9
                assert merged.box.x2 <= max(m.box.x2 for m in g.members) + 1e-9
                assert merged.box.y2 <= max(m.box.y2 for m in g.members) + 1e-9


class TestFuse:
    def test_merge_mode_on_trio(self):
        r1, r2, r3 = trio()
        params = FusionParams(
            sigma=0.5, metric=OverlapMetric.INTERSECTION_SCORE, mode=FusionMode.WEIGHTED_MERGE
        )
        fused = fuse([r1, r2, r3], params)
        assert len(fused) == 2
        assert fused[0].box == r2.box  # isolated region survives untouched

    def test_empty_input(self):
        assert fuse([], FusionParams()) == []

    def test_metric_distinction_for_adjacent_objects(self):
        # Equal-size neighbours: intersection score 0.6 but IoU ~ 0.43, so a
        # 0.5 threshold merges under one metric and not the other.
        a = Region(BBox(0, 0, 10, 10), 1, 0.9)
        b = Region(BBox(4, 0, 14, 10), 1, 0.8)
        assert intersection_score(a.box, b.box) == pytest.approx(0.6)
        assert iou(a.box, b.box) == pytest.approx(6 / 14)
        by_score = fuse(
            [a, b],
            FusionParams(sigma=0.5, metric=OverlapMetric.INTERSECTION_SCORE),
        )
        by_iou = fuse([a, b], FusionParams(sigma=0.5, metric=OverlapMetric.IOU))
        assert len(by_score) == 1
        assert len(by_iou) == 2

    def test_permutation_invariance(self):
        rng = random.Random(10)
        regions = random_instance(rng, 60)
        params = FusionParams(sigma=0.45)
        reference = fuse(regions, params)
        for _ in range(10):
            shuffled = regions[:]
            rng.shuffle(shuffled)
            assert fuse(shuffled, params) == reference


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_select_matches_brute_force(seed):
    rng = random.Random(seed)
    regions = random_instance(rng)
    params = FusionParams(
        sigma=rng.uniform(0.2, 0.8),
        metric=rng.choice(list(OverlapMetric)),
        mode=FusionMode.SELECT,
        category_scope=rng.choice(list(CategoryScope)),
    )
    got = fuse(regions, params)
    expected = sort_regions(brute_force_nms(regions, params))
    assert got == expected


def test_select_matches_brute_force_both_metrics_and_scopes():
    # 200 seeded instances spread over every metric x scope combination.
    count = 0
    for seed in range(50):
        rng = random.Random(1000 + seed)
        regions = random_instance(rng)
        sigma = rng.uniform(0.2, 0.8)
        for metric in OverlapMetric:
            for scope in CategoryScope:
                params = FusionParams(
                    sigma=sigma, metric=metric, mode=FusionMode.SELECT, category_scope=scope
                )
                assert fuse(regions, params) == sort_regions(
                    brute_force_nms(regions, params)
                )
                count += 1
    assert count == 200
