"""Scoring detections against ground truth.

Matching walks detections in descending confidence and greedily claims the
best-overlapping unmatched ground-truth box of the same category, requiring
IoU strictly above the threshold (0.5 by default). Average precision is the
area under the interpolated precision/recall curve (all recall points, with
precision replaced by its running maximum toward higher recall), pooled per
category across the whole image set. Also here: dataset analyses that need
no detections at all (category co-occurrence, nearest-neighbour spatial
graphs, object-size histograms).
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .categories import (
    NUM_CATEGORIES,
    Rarity,
    SizeGroup,
    ids_in_rarity,
    ids_in_size_group,
)
from .geometry import BBox, Region, iou, region_sort_key

# Per image id: detections with confidence, and ground truth without.
DetectionSet = Mapping[str, Sequence[Region]]
GroundTruthSet = Mapping[str, Sequence[tuple[BBox, int]]]

DEFAULT_IOU_MIN = 0.5


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class MatchRecord:
    """Verdict for one detection: the ground-truth index it claimed, or
    None for a false positive."""

    det_index: int
    gt_index: Optional[int]
    confidence: float

    @property
    def is_tp(self) -> bool:
        return self.gt_index is not None


def match_detections(
    dets: Sequence[Region],
    gts: Sequence[tuple[BBox, int]],
    iou_min: float = DEFAULT_IOU_MIN,
    *,
    strict: bool = True,
) -> list[MatchRecord]:
    """Greedy confidence-ordered matching within one image.

    Each detection claims the unmatched same-category ground-truth box with
    the highest IoU, provided the IoU clears ``iou_min`` (strictly, unless
    ``strict`` is False). A claimed box is consumed; IoU ties resolve to the
    lowest ground-truth index. Records come back in processing order.
    """
    if not (0.0 < iou_min < 1.0):
        raise ValueError(f"iou_min must be in (0, 1), got {iou_min}")
    better = operator.gt if strict else operator.ge

    order = sorted(range(len(dets)), key=lambda i: region_sort_key(dets[i]))
    consumed = [False] * len(gts)
    records = []
    for det_index in order:
        det = dets[det_index]
        best_iou = 0.0
        best_gt: Optional[int] = None
        for gt_index, (gt_box, gt_cat) in enumerate(gts):
            if consumed[gt_index] or gt_cat != det.category:
                continue
            overlap = iou(det.box, gt_box)
            if overlap > best_iou:
                best_iou = overlap
                best_gt = gt_index
        if best_gt is not None and better(best_iou, iou_min):
            consumed[best_gt] = True
            records.append(MatchRecord(det_index, best_gt, det.confidence))
        else:
            records.append(MatchRecord(det_index, None, det.confidence))
    return records


def average_precision(records: Sequence[MatchRecord], gt_count: int) -> float:
    """Area under the interpolated precision/recall curve for one category.

    ``records`` must already be sorted by descending confidence; ``gt_count``
    is the number of ground-truth instances (recall denominator).
    """
    if gt_count < 0:
        raise ValueError(f"gt_count must be >= 0, got {gt_count}")
    if gt_count == 0 or not records:
        return 0.0
    hits = np.array([r.is_tp for r in records], dtype=bool)
    tps = np.cumsum(hits)
    precision = tps / np.arange(1, len(records) + 1)
    # Interpolate: precision at each rank becomes the max at any later rank
    # (i.e. at any recall level >= this one).
    interpolated = np.maximum.accumulate(precision[::-1])[::-1]
    # Each hit lifts recall by exactly 1 / gt_count, so the area under the
    # interpolated curve is the mean interpolated precision over hits. This
    # form telescopes exactly: a perfect ranking scores exactly 1.0.
    return float(interpolated[hits].sum() / gt_count)


@dataclass(frozen=True)
class CategoryCounts:
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    """Per-category APs, the overall mean, and subset breakdowns.

    Categories never appearing in the ground truth are excluded from every
    mean (their AP is undefined); categories with ground truth but no
    detections contribute an AP of zero.
    """

    per_category_ap: dict[int, float]
    mean_ap: float
    subset_mean_ap: dict[str, Optional[float]]
    counts: dict[int, CategoryCounts]
    iou_min: float

    def to_json_dict(self) -> dict:
        return {
            "iou_min": self.iou_min,
            "mean_ap": self.mean_ap,
            "subset_mean_ap": dict(self.subset_mean_ap),
            "per_category_ap": {str(k): v for k, v in sorted(self.per_category_ap.items())},
            "counts": {
                str(k): {"tp": c.tp, "fp": c.fp, "fn": c.fn}
                for k, c in sorted(self.counts.items())
            },
        }

    def format_table(self, name_of=None) -> str:
        lines = [f"{'category':<36} {'AP':>8} {'TP':>7} {'FP':>7} {'FN':>7}"]
        for cat in sorted(set(self.per_category_ap) | set(self.counts)):
            label = name_of(cat) if name_of is not None else str(cat)
            ap = self.per_category_ap.get(cat)
            ap_text = f"{ap:8.4f}" if ap is not None else "       -"
            c = self.counts.get(cat, CategoryCounts(0, 0, 0))
            lines.append(f"{label:<36} {ap_text} {c.tp:>7} {c.fp:>7} {c.fn:>7}")
        lines.append("")
        lines.append(f"{'mAP':<36} {self.mean_ap:8.4f}")
        for subset, value in self.subset_mean_ap.items():
            text = f"{value:8.4f}" if value is not None else "       -"
            lines.append(f"{'mAP ' + subset:<36} {text}")
        return "\n".join(lines)


def evaluate(
    dets: DetectionSet,
    gts: GroundTruthSet,
    iou_min: float = DEFAULT_IOU_MIN,
    *,
    strict: bool = True,
) -> EvalReport:
    """Score a detection set against ground truth, pooling matches per
    category across all images before building each PR curve."""
    unknown = sorted(set(dets) - set(gts))
    if unknown:
        raise EvaluationError(f"detections reference unknown image ids: {unknown}")

    gt_count: dict[int, int] = {}
    for entries in gts.values():
        for _, cat in entries:
            gt_count[cat] = gt_count.get(cat, 0) + 1

    pooled: dict[int, list[MatchRecord]] = {}
    for image_id in sorted(gts):
        image_dets = dets.get(image_id, ())
        records = match_detections(image_dets, gts[image_id], iou_min, strict=strict)
        for record in records:
            cat = image_dets[record.det_index].category
            pooled.setdefault(cat, []).append(record)

    per_category_ap: dict[int, float] = {}
    counts: dict[int, CategoryCounts] = {}
    for cat in sorted(set(gt_count) | set(pooled)):
        records = sorted(pooled.get(cat, []), key=lambda r: -r.confidence)
        tp = sum(1 for r in records if r.is_tp)
        fp = len(records) - tp
        n_gt = gt_count.get(cat, 0)
        counts[cat] = CategoryCounts(tp=tp, fp=fp, fn=n_gt - tp)
        if n_gt > 0:
            per_category_ap[cat] = average_precision(records, n_gt)

    included = sorted(per_category_ap)
    mean_ap = float(np.mean([per_category_ap[c] for c in included])) if included else 0.0

    subsets = {
        "small": ids_in_size_group(SizeGroup.SMALL),
        "medium": ids_in_size_group(SizeGroup.MEDIUM),
        "large": ids_in_size_group(SizeGroup.LARGE),
        "common": ids_in_rarity(Rarity.COMMON),
        "rare": ids_in_rarity(Rarity.RARE),
    }
    subset_mean_ap: dict[str, Optional[float]] = {}
    for name, cats in subsets.items():
        values = [per_category_ap[c] for c in cats if c in per_category_ap]
        subset_mean_ap[name] = float(np.mean(values)) if values else None

    return EvalReport(
        per_category_ap=per_category_ap,
        mean_ap=mean_ap,
        subset_mean_ap=subset_mean_ap,
        counts=counts,
        iou_min=iou_min,
    )


def cooccurrence_matrix(gts: GroundTruthSet) -> np.ndarray:
    """Symmetric category co-occurrence counts over images.

    Entry (a, b) counts images where categories a and b both appear; the
    diagonal counts images containing the category at all. Indices are
    category id minus one.
    """
    matrix = np.zeros((NUM_CATEGORIES, NUM_CATEGORIES), dtype=np.int64)
    for entries in gts.values():
        present = sorted({cat for _, cat in entries})
        for a in present:
            matrix[a - 1, a - 1] += 1
        for i, a in enumerate(present):
            for b in present[i + 1 :]:
                matrix[a - 1, b - 1] += 1
                matrix[b - 1, a - 1] += 1
    return matrix


def spatial_graph(boxes: Sequence[BBox], k: int) -> list[tuple[int, int, float]]:
    """Undirected k-nearest-neighbour edges between box centers.

    Each box links to its k nearest peers by Euclidean center distance;
    duplicate directions collapse to one edge carrying that distance.
    Fewer than two boxes yield no edges.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(boxes)
    if n < 2:
        return []
    centers = np.array([b.center() for b in boxes], dtype=np.float64)
    indices = np.arange(n)

    # one distance row at a time keeps memory linear in n even for
    # object-dense images
    edges: dict[tuple[int, int], float] = {}
    for i in range(n):
        dist = np.sqrt(((centers - centers[i]) ** 2).sum(axis=1))
        dist[i] = np.inf
        order = np.lexsort((indices, dist))  # distance, then index: deterministic ties
        for j in order[: min(k, n - 1)]:
            edges[(min(i, int(j)), max(i, int(j)))] = float(dist[j])
    return [(i, j, d) for (i, j), d in sorted(edges.items())]


@dataclass(frozen=True)
class SizeHistogram:
    """Counts of max(box width, box height) in log-spaced pixel bins."""

    edges: tuple[float, ...]
    counts: tuple[int, ...]

    def rows(self) -> list[tuple[float, float, int]]:
        return [
            (self.edges[i], self.edges[i + 1], self.counts[i]) for i in range(len(self.counts))
        ]


# Object extents in this domain run from a few pixels to a few thousand;
# power-of-two bins from 4 px to 4096 px cover that with 10 buckets.
SIZE_BIN_EDGES = tuple(float(4 * 2**i) for i in range(11))


def size_histogram(gts: GroundTruthSet) -> SizeHistogram:
    """Histogram of object extents (longer box side), outliers clamped into
    the end bins so totals always equal the region count."""
    counts = [0] * (len(SIZE_BIN_EDGES) - 1)
    for entries in gts.values():
        for box, _ in entries:
            extent = max(box.width, box.height)
            idx = int(np.searchsorted(SIZE_BIN_EDGES, extent, side="right")) - 1
            idx = min(max(idx, 0), len(counts) - 1)
            counts[idx] += 1
    return SizeHistogram(edges=SIZE_BIN_EDGES, counts=tuple(counts))
