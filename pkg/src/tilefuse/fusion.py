"""Grouping of overlapping candidate regions and the two ways to reduce a
group: classic greedy NMS (keep the top-confidence member) or a
confidence-weighted merge of the member boxes.

Grouping is single-pass greedy against the seed only: regions are visited
in canonical order, the highest-confidence unassigned region seeds a group,
and every unassigned region whose overlap with that seed exceeds sigma
joins it. Merged boxes are never re-tested, which keeps the whole procedure
permutation invariant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .geometry import (
    BBox,
    Region,
    region_sort_key,
    sort_regions,
)

log = logging.getLogger(__name__)


class OverlapMetric(Enum):
    IOU = "iou"
    INTERSECTION_SCORE = "intersection_score"


class FusionMode(Enum):
    SELECT = "select"
    WEIGHTED_MERGE = "merge"


class CategoryScope(Enum):
    PER_CATEGORY = "per_category"
    CATEGORY_AGNOSTIC = "category_agnostic"


@dataclass(frozen=True)
class FusionParams:
    """Knobs for grouping and reduction.

    ``sigma`` is the overlap threshold: a region joins the seed's group when
    the chosen metric exceeds it. For the asymmetric intersection score, the
    seed is the reference (denominator) box.
    """

    sigma: float = 0.5
    metric: OverlapMetric = OverlapMetric.IOU
    mode: FusionMode = FusionMode.WEIGHTED_MERGE
    category_scope: CategoryScope = CategoryScope.PER_CATEGORY

    def __post_init__(self) -> None:
        if not (0.0 < self.sigma < 1.0):
            raise ValueError(f"sigma must be in (0, 1), got {self.sigma}")


@dataclass(frozen=True)
class RegionGroup:
    """A seed region and every member greedily assigned to it.

    The seed is always the first member and carries the group's maximum
    confidence.
    """

    seed: Region
    members: tuple[Region, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.members:
            object.__setattr__(self, "members", (self.seed,))
        if self.seed not in self.members:
            raise ValueError("seed must be one of the group members")
        if any(m.confidence > self.seed.confidence for m in self.members):
            raise ValueError("seed must carry the maximum confidence of its group")


def _greedy_groups(ordered: Sequence[Region], params: FusionParams) -> list[RegionGroup]:
    """Greedy partition of confidence-ordered regions; overlap against each
    seed is evaluated vectorized but with the exact float expressions of the
    scalar geometry helpers, so results are bit-identical."""
    n = len(ordered)
    x1 = np.fromiter((r.box.x1 for r in ordered), dtype=np.float64, count=n)
    y1 = np.fromiter((r.box.y1 for r in ordered), dtype=np.float64, count=n)
    x2 = np.fromiter((r.box.x2 for r in ordered), dtype=np.float64, count=n)
    y2 = np.fromiter((r.box.y2 for r in ordered), dtype=np.float64, count=n)
    areas = (x2 - x1) * (y2 - y1)

    unassigned = np.ones(n, dtype=bool)
    groups: list[RegionGroup] = []
    for i in range(n):
        if not unassigned[i]:
            continue
        unassigned[i] = False
        iw = np.minimum(x2[i], x2) - np.maximum(x1[i], x1)
        ih = np.minimum(y2[i], y2) - np.maximum(y1[i], y1)
        positive = (iw > 0.0) & (ih > 0.0)
        inter = np.where(positive, iw * ih, 0.0)
        if params.metric is OverlapMetric.IOU:
            ratio = inter / ((areas[i] + areas) - inter)
        else:
            ratio = inter / areas[i]
        joined = unassigned & (ratio > params.sigma)
        unassigned[joined] = False
        members = (ordered[i], *(ordered[j] for j in np.nonzero(joined)[0]))
        groups.append(RegionGroup(seed=ordered[i], members=members))
    return groups


def group_regions(regions: Iterable[Region], params: FusionParams) -> list[RegionGroup]:
    """Greedily partition regions into groups of overlapping candidates.

    Visits regions by descending confidence (canonical tie-break); each
    unassigned region whose overlap with the current seed exceeds sigma is
    pulled into the seed's group. Under per-category scope only regions of
    the seed's category are considered, so the greedy walk runs one category
    at a time.
    """
    ordered = sort_regions(regions)
    if not ordered:
        return []
    if params.category_scope is CategoryScope.CATEGORY_AGNOSTIC:
        return _greedy_groups(ordered, params)

    buckets: dict[int, list[Region]] = {}
    for r in ordered:
        buckets.setdefault(r.category, []).append(r)
    groups: list[RegionGroup] = []
    for bucket in buckets.values():
        groups.extend(_greedy_groups(bucket, params))
    groups.sort(key=lambda g: region_sort_key(g.seed))
    return groups


def nms_select(groups: Sequence[RegionGroup]) -> list[Region]:
    """Keep each group's seed, untouched."""
    return [g.seed for g in groups]


def merge_group(group: RegionGroup) -> Region:
    """Confidence-weighted mean of the member boxes.

    Each coordinate of the merged box is sum(w * coord) / sum(w) over the
    members. The merged region keeps the seed's category and confidence so
    ranking semantics survive the merge. A group whose total weight is zero
    falls back to the unweighted mean.
    """
    total = sum(m.confidence for m in group.members)
    if total > 0.0:
        weights = [m.confidence / total for m in group.members]
    else:
        log.warning(
            "all %d members of a group carry zero confidence; merging with equal weights",
            len(group.members),
        )
        weights = [1.0 / len(group.members)] * len(group.members)

    x1 = sum(w * m.box.x1 for w, m in zip(weights, group.members))
    y1 = sum(w * m.box.y1 for w, m in zip(weights, group.members))
    x2 = sum(w * m.box.x2 for w, m in zip(weights, group.members))
    y2 = sum(w * m.box.y2 for w, m in zip(weights, group.members))
    return Region(
        box=BBox(x1, y1, x2, y2),
        category=group.seed.category,
        confidence=group.seed.confidence,
    )


def weighted_merge(groups: Sequence[RegionGroup]) -> list[Region]:
    return [merge_group(g) for g in groups]


def fuse(regions: Iterable[Region], params: FusionParams) -> list[Region]:
    """Group overlapping candidates and reduce per the configured mode,
    returning regions in canonical order."""
    groups = group_regions(regions, params)
    if params.mode is FusionMode.SELECT:
        reduced = nms_select(groups)
    else:
        reduced = weighted_merge(groups)
    return sort_regions(reduced)
