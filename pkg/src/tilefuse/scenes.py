"""Seeded synthetic scene generation.

A scene is a virtual aerial image: dimensions plus ground-truth boxes drawn
from a fixed pool of categories spanning all three size groups and both
rarity classes. Scenes pair with the synthetic detector backend, which
needs no pixels, so benchmark runs stay cheap at any image size.

Two flavours exist. `generate_scenes` places objects uniformly, so tiles
routinely see objects partially; that is the realistic input for noisy
benchmark runs. `generate_clean_scenes` places every object so that each
pass of each pipeline covering its size group sees it either completely
inside one tile or below the partial-visibility emission threshold, and no
two same-category objects overlap appreciably. On such scenes a noise-free
detector plus fusion reproduces the ground truth exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .categories import SizeGroup, id_of
from .detector import KNOWN_BACKEND_SIZES, VISIBILITY_MIN_FRACTION
from .geometry import BBox, iou
from .images import BlankImage, scaled_size
from .pipeline import EnsembleConfig
from .tiling import plan_tiles

# Category pools per size group; each includes rare and common entries so
# subset breakdowns exercise every slice.
SMALL_POOL = ("small-car", "bus", "motorboat", "excavator", "cement-mixer", "crane-truck")
MEDIUM_POOL = ("building", "storage-tank", "shed", "fixed-wing-aircraft", "sailboat")
LARGE_POOL = ("vehicle-lot", "facility", "ferry", "barge", "container-ship")

# Object extents in original-frame pixels. Large objects stay below the
# smallest tile edge so a suitable pipeline scale can always contain them.
_EXTENTS = {
    "small": (8.0, 45.0),
    "medium": (40.0, 180.0),
    "large": (120.0, 350.0),
}
_COUNTS = {
    "small": (8, 24),
    "medium": (5, 14),
    "large": (2, 7),
}
_POOLS = {
    "small": SMALL_POOL,
    "medium": MEDIUM_POOL,
    "large": LARGE_POOL,
}


@dataclass(frozen=True)
class Scene:
    image_id: str
    width: int
    height: int
    objects: tuple[tuple[BBox, int], ...]


def _place_objects(rng: np.random.Generator, width: int, height: int, group: str):
    lo, hi = _EXTENTS[group]
    n = int(rng.integers(_COUNTS[group][0], _COUNTS[group][1] + 1))
    pool = _POOLS[group]
    placed = []
    for _ in range(n):
        w = float(rng.uniform(lo, hi))
        h = float(np.clip(w * rng.uniform(0.65, 1.5), lo, hi))
        w = min(w, width - 1.0)
        h = min(h, height - 1.0)
        x1 = float(rng.uniform(0.0, width - w))
        y1 = float(rng.uniform(0.0, height - h))
        name = pool[int(rng.integers(0, len(pool)))]
        placed.append((BBox(x1, y1, x1 + w, y1 + h), id_of(name)))
    return placed


def generate_scene(image_id: str, seed: int, index: int) -> Scene:
    """One scene, fully determined by (seed, index)."""
    rng = np.random.default_rng([seed, index])
    width = int(rng.integers(450, 1200))
    height = int(rng.integers(450, 1100))
    objects = []
    for group in ("small", "medium", "large"):
        objects.extend(_place_objects(rng, width, height, group))
    return Scene(image_id=image_id, width=width, height=height, objects=tuple(objects))


def generate_scenes(count: int, seed: int, prefix: str = "scene") -> list[Scene]:
    width = len(str(max(count - 1, 0)))
    return [
        generate_scene(f"{prefix}{i:0{max(width, 3)}d}", seed, i) for i in range(count)
    ]


def scenes_to_ground_truth(scenes) -> dict[str, list[tuple[BBox, int]]]:
    return {s.image_id: list(s.objects) for s in scenes}


def scene_images(scenes) -> list[BlankImage]:
    return [BlankImage(s.image_id, s.width, s.height) for s in scenes]


# ---------------------------------------------------------------------------
# Clean scenes: placements that tile boundaries cannot fragment.

@dataclass(frozen=True)
class PassGrid:
    """One tiling pass of one pipeline: a scale, a tile edge, an overlap."""

    scale: float
    tile: int
    overlap: int


def ensemble_passes(
    ens: EnsembleConfig, backend_sizes=None
) -> dict[SizeGroup, list[PassGrid]]:
    """All tiling passes that will see each size group, deduplicated."""
    sizes = KNOWN_BACKEND_SIZES if backend_sizes is None else backend_sizes
    passes: dict[SizeGroup, list[PassGrid]] = {g: [] for g in SizeGroup}
    for cfg in ens.pipelines:
        for tile in sizes[cfg.backend]:
            grid = PassGrid(scale=cfg.scale, tile=tile, overlap=cfg.overlap_px)
            for group in cfg.size_groups:
                if grid not in passes[group]:
                    passes[group].append(grid)
    return passes


Interval = tuple[float, float]


def _merge_intervals(intervals: Iterable[Interval]) -> list[Interval]:
    merged: list[Interval] = []
    for lo, hi in sorted(i for i in intervals if i[0] < i[1]):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def _subtract_intervals(base: Sequence[Interval], holes: Sequence[Interval]) -> list[Interval]:
    out = []
    for lo, hi in base:
        pieces = [(lo, hi)]
        for hlo, hhi in holes:
            next_pieces = []
            for plo, phi in pieces:
                if hhi <= plo or hlo >= phi:
                    next_pieces.append((plo, phi))
                    continue
                if plo < hlo:
                    next_pieces.append((plo, hlo))
                if hhi < phi:
                    next_pieces.append((hhi, phi))
            pieces = next_pieces
        out.extend(pieces)
    return _merge_intervals(out)


def _intersect_intervals(a: Sequence[Interval], b: Sequence[Interval]) -> list[Interval]:
    out = []
    for alo, ahi in a:
        for blo, bhi in b:
            lo, hi = max(alo, blo), min(ahi, bhi)
            if lo < hi:
                out.append((lo, hi))
    return _merge_intervals(out)


def _sample_from_intervals(intervals: Sequence[Interval], rng) -> float | None:
    lengths = [hi - lo for lo, hi in intervals]
    total = sum(lengths)
    if total <= 0:
        return None
    u = rng.uniform(0.0, total)
    for (lo, hi), length in zip(intervals, lengths):
        if u <= length:
            return lo + u
        u -= length
    return intervals[-1][1]


# Positions this close (scaled px) to a safe-interval boundary are excluded
# so float rounding can never flip a box into the partial-visibility window.
_EDGE_MARGIN = 0.5


def _axis_origins_for(extent: int, grid: PassGrid) -> list[int]:
    plan = plan_tiles(extent, grid.tile, grid.tile, grid.overlap)
    return sorted({t.origin_x for t in plan.tiles})


def _safe_axis_positions(extent_scaled: int, ws: float, grid: PassGrid) -> list[Interval]:
    """Original-axis-agnostic safe start positions, in the scaled frame.

    Safe means: fully inside some tile, and overlapping every other tile by
    at most the emission fraction. Both conditions decompose per axis since
    the visible fraction of a box is the product of its axis fractions.
    """
    origins = _axis_origins_for(extent_scaled, grid)
    t = float(grid.tile)
    full = _merge_intervals(
        (o + _EDGE_MARGIN, o + t - ws - _EDGE_MARGIN) for o in map(float, origins)
    )
    threshold = VISIBILITY_MIN_FRACTION
    forbidden = _merge_intervals(
        band
        for o in map(float, origins)
        for band in (
            (o - (1 - threshold) * ws - _EDGE_MARGIN, o + _EDGE_MARGIN),
            (o + t - ws - _EDGE_MARGIN, o + t - threshold * ws + _EDGE_MARGIN),
        )
    )
    return _subtract_intervals(full, forbidden)


def _clean_positions(extent: int, w: float, grids: Sequence[PassGrid]) -> list[Interval]:
    """Start positions (original frame) safe for every pass, one axis."""
    allowed = [(0.0, float(extent) - w)]
    for grid in grids:
        scaled_extent = scaled_size(extent, extent, grid.scale)[0]
        scaled = _safe_axis_positions(scaled_extent, w * grid.scale, grid)
        original = [(lo / grid.scale, hi / grid.scale) for lo, hi in scaled]
        allowed = _intersect_intervals(allowed, original)
        if not allowed:
            return []
    return allowed


_CLEAN_EXTENTS = {
    "small": (10.0, 40.0),
    "medium": (45.0, 120.0),
    "large": (120.0, 200.0),
}
_CLEAN_COUNTS = {
    "small": (6, 14),
    "medium": (4, 8),
    "large": (2, 4),
}

# Same-category ground-truth pairs above this IoU would be fused into one
# region even by a perfect run; clean scenes keep them apart.
_MAX_SAME_CATEGORY_IOU = 0.3


def _place_clean_objects(rng, width, height, group, grids):
    lo, hi = _CLEAN_EXTENTS[group]
    n = int(rng.integers(_CLEAN_COUNTS[group][0], _CLEAN_COUNTS[group][1] + 1))
    pool = _POOLS[group]
    placed: list[tuple[BBox, int]] = []
    for _ in range(n):
        for _attempt in range(40):
            w = float(rng.uniform(lo, hi))
            h = float(np.clip(w * rng.uniform(0.7, 1.4), lo, hi))
            xs = _clean_positions(width, w, grids)
            ys = _clean_positions(height, h, grids)
            x1 = _sample_from_intervals(xs, rng)
            y1 = _sample_from_intervals(ys, rng)
            if x1 is None or y1 is None:
                continue
            box = BBox(x1, y1, x1 + w, y1 + h)
            name = pool[int(rng.integers(0, len(pool)))]
            cat = id_of(name)
            if any(
                iou(box, other) > _MAX_SAME_CATEGORY_IOU
                for other, other_cat in placed
                if other_cat == cat
            ):
                continue
            placed.append((box, cat))
            break
    return placed


def generate_clean_scene(
    image_id: str, seed: int, index: int, ens: EnsembleConfig
) -> Scene:
    rng = np.random.default_rng([seed, index, 1])
    width = int(rng.integers(700, 1200))
    height = int(rng.integers(600, 1100))
    passes = ensemble_passes(ens)
    objects = []
    for group in ("small", "medium", "large"):
        grids = passes[SizeGroup(group)]
        objects.extend(_place_clean_objects(rng, width, height, group, grids))
    return Scene(image_id=image_id, width=width, height=height, objects=tuple(objects))


def generate_clean_scenes(
    count: int, seed: int, ens: EnsembleConfig, prefix: str = "clean"
) -> list[Scene]:
    width = len(str(max(count - 1, 0)))
    return [
        generate_clean_scene(f"{prefix}{i:0{max(width, 3)}d}", seed, i, ens)
        for i in range(count)
    ]
