"""Axis-aligned box arithmetic, overlap metrics, and frame transforms.

Boxes are continuous rectangles: area is plain ``width * height`` with no
"+1" pixel correction, and zero-area contact (shared edge or corner) counts
as no overlap. Everything here is pure and operates on immutable values, so
it is safe from any number of concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle with strictly positive area.

    ``(x1, y1)`` is the upper-left corner, ``(x2, y2)`` the lower-right one,
    in continuous pixel coordinates of whatever frame the box lives in.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate: {v!r}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(
                f"box must have positive extent: "
                f"({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class Region:
    """One detection hypothesis: a box, a category id, and a confidence."""

    box: BBox
    category: int
    confidence: float

    def __post_init__(self) -> None:
        if self.category < 1:
            raise ValueError(f"category id must be >= 1, got {self.category}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


def area(b: BBox) -> float:
    """Area of a box; positive by the type invariant."""
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def intersection(b1: BBox, b2: BBox) -> Optional[BBox]:
    """Overlap rectangle of two boxes, or None when there is no positive-area
    overlap (edge or corner contact counts as none)."""
    x1 = max(b1.x1, b2.x1)
    y1 = max(b1.y1, b2.y1)
    x2 = min(b1.x2, b2.x2)
    y2 = min(b1.y2, b2.y2)
    if x1 >= x2 or y1 >= y2:
        return None
    return BBox(x1, y1, x2, y2)


def iou(b1: BBox, b2: BBox) -> float:
    """Intersection over union; symmetric, in [0, 1], 0 when disjoint."""
    inter = intersection(b1, b2)
    if inter is None:
        return 0.0
    inter_area = area(inter)
    return inter_area / (area(b1) + area(b2) - inter_area)


def intersection_score(ref: BBox, other: BBox) -> float:
    """Overlap area normalized by the area of ``ref`` (the first argument).

    Asymmetric by construction: a small box fully inside a large one scores
    1.0 when it is the reference but less when the large box is.
    """
    inter = intersection(ref, other)
    if inter is None:
        return 0.0
    return area(inter) / area(ref)


def scale_box(b: BBox, factor: float) -> BBox:
    """Multiply all four coordinates by ``factor`` (> 0)."""
    if not (factor > 0.0):
        raise ValueError(f"scale factor must be positive, got {factor}")
    return BBox(b.x1 * factor, b.y1 * factor, b.x2 * factor, b.y2 * factor)


def to_original(b: BBox, scale: float) -> BBox:
    """Map a box from the rescaled frame back to original-image coordinates.

    ``scale`` is the factor the image was rescaled by (< 1 means the image
    was shrunk), so coordinates come back multiplied by ``1 / scale``.
    """
    if not (scale > 0.0):
        raise ValueError(f"scale factor must be positive, got {scale}")
    return scale_box(b, 1.0 / scale)


def translate(b: BBox, dx: float, dy: float) -> BBox:
    return BBox(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy)


def clip(b: BBox, width: float, height: float) -> Optional[BBox]:
    """Intersect a box with the image rectangle [0, width] x [0, height].

    Returns None when the box lies entirely outside (or only touches the
    border), mirroring `intersection`.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"image extent must be positive, got {width}x{height}")
    x1 = max(b.x1, 0.0)
    y1 = max(b.y1, 0.0)
    x2 = min(b.x2, float(width))
    y2 = min(b.y2, float(height))
    if x1 >= x2 or y1 >= y2:
        return None
    return BBox(x1, y1, x2, y2)


def region_sort_key(r: Region) -> tuple:
    """Canonical ordering: confidence descending, then category and
    coordinates ascending. Shared by fusion, serialization, and evaluation
    so results never depend on worker scheduling."""
    b = r.box
    return (-r.confidence, r.category, b.x1, b.y1, b.x2, b.y2)


def sort_regions(regions) -> list[Region]:
    """Sort into the canonical deterministic order."""
    return sorted(regions, key=region_sort_key)
