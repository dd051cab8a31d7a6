import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilefuse.geometry import BBox, Region, intersection, scale_box, to_original
from tilefuse.tiling import TileSpec, plan_tiles, tile_to_scaled


def oracle_origins(extent: int, tile: int, overlap: int) -> list[int]:
    """Independent stride-then-clamp enumeration of tile origins."""
    if extent < tile:
        return [0]
    stride = tile - overlap
    origins = list(range(0, extent - tile + 1, stride))
    if origins[-1] != extent - tile:
        origins.append(extent - tile)
    return origins


class TestPlanTiles:
    def test_exact_division(self):
        plan = plan_tiles(900, 900, 300, 0)
        assert len(plan.tiles) == 9
        assert sorted({t.origin_x for t in plan.tiles}) == [0, 300, 600]
        assert sorted({t.origin_y for t in plan.tiles}) == [0, 300, 600]

    def test_edge_clamped_origins(self):
        plan = plan_tiles(1000, 1000, 300, 0)
        assert sorted({t.origin_x for t in plan.tiles}) == [0, 300, 600, 700]
        assert sorted({t.origin_y for t in plan.tiles}) == [0, 300, 600, 700]
        assert len(plan.tiles) == 16

    def test_overlap_origins(self):
        plan = plan_tiles(1000, 1000, 300, 150)
        assert sorted({t.origin_x for t in plan.tiles}) == [0, 150, 300, 450, 600, 700]
        assert len(plan.tiles) == 36

    def test_rejects_overlap_at_least_tile(self):
        with pytest.raises(ValueError):
            plan_tiles(1000, 1000, 300, 300)
        with pytest.raises(ValueError):
            plan_tiles(1000, 1000, 300, 400)

    def test_small_image_single_padded_tile(self):
        plan = plan_tiles(200, 900, 300, 0)
        assert sorted({t.origin_x for t in plan.tiles}) == [0]
        assert all(t.needs_padding for t in plan.tiles)
        assert all(t.width == 300 and t.height == 300 for t in plan.tiles)

    def test_row_major_order(self):
        plan = plan_tiles(700, 700, 300, 0)
        positions = [(t.row, t.col) for t in plan.tiles]
        assert positions == sorted(positions)
        # row index follows y, col follows x
        for t in plan.tiles:
            assert t.origin_y == sorted({u.origin_y for u in plan.tiles})[t.row]
            assert t.origin_x == sorted({u.origin_x for u in plan.tiles})[t.col]


def axis_covered(origins: list[int], tile: int, extent: int) -> bool:
    """Intervals [o, o + tile) must jointly cover [0, extent)."""
    ordered = sorted(origins)
    if ordered[0] != 0:
        return False
    reach = ordered[0] + tile
    for o in ordered[1:]:
        if o > reach:
            return False
        reach = max(reach, o + tile)
    return reach >= extent


@settings(max_examples=500, deadline=None)
@given(
    image_w=st.integers(1, 5000),
    image_h=st.integers(1, 5000),
    tile=st.sampled_from([300, 400, 500]),
    overlap=st.integers(0, 150),
)
def test_coverage_and_bounds(image_w, image_h, tile, overlap):
    plan = plan_tiles(image_w, image_h, tile, overlap)

    xs = sorted({t.origin_x for t in plan.tiles})
    ys = sorted({t.origin_y for t in plan.tiles})
    assert axis_covered(xs, tile, image_w)
    assert axis_covered(ys, tile, image_h)

    if image_w >= tile:
        assert all(t.origin_x + t.width <= image_w for t in plan.tiles)
        assert xs == oracle_origins(image_w, tile, overlap)
    if image_h >= tile:
        assert all(t.origin_y + t.height <= image_h for t in plan.tiles)
        assert ys == oracle_origins(image_h, tile, overlap)

    assert all(t.origin_x >= 0 and t.origin_y >= 0 for t in plan.tiles)
    assert len({(t.row, t.col) for t in plan.tiles}) == len(plan.tiles)

    # deterministic: replanning yields the identical grid
    assert plan_tiles(image_w, image_h, tile, overlap).tiles == plan.tiles


def test_extreme_overlap_still_covers():
    # stride collapses to 10 px; legal, if wasteful
    plan = plan_tiles(1200, 900, 300, 290)
    xs = sorted({t.origin_x for t in plan.tiles})
    assert xs == oracle_origins(1200, 300, 290)
    assert axis_covered(xs, 300, 1200)
    assert all(t.origin_x + t.width <= 1200 for t in plan.tiles)


def test_pixel_centers_covered_small_case():
    rng = np.random.default_rng(7)
    for _ in range(25):
        w = int(rng.integers(1, 900))
        h = int(rng.integers(1, 900))
        tile = int(rng.choice([300, 400, 500]))
        plan = plan_tiles(w, h, tile, int(rng.integers(0, tile)))
        xs = np.array(sorted({t.origin_x for t in plan.tiles}))
        for px in rng.integers(0, w, size=50):
            assert any((xs <= px + 0.5) & (px + 0.5 < xs + tile))


def test_zero_overlap_exact_multiple_partitions():
    plan = plan_tiles(900, 600, 300, 0)
    boxes = [
        BBox(t.origin_x, t.origin_y, t.origin_x + t.width, t.origin_y + t.height)
        for t in plan.tiles
    ]
    for i, a in enumerate(boxes):
        for b in boxes[i + 1 :]:
            assert intersection(a, b) is None


class TestTileToScaled:
    def test_translation(self):
        r = Region(BBox(10, 10, 20, 20), 5, 0.5)
        t = TileSpec(300, 600, 300, 300, row=2, col=1)
        moved = tile_to_scaled(r, t)
        assert moved.box == BBox(310, 610, 320, 620)
        assert moved.category == 5 and moved.confidence == 0.5

    def test_identity_at_origin(self):
        r = Region(BBox(1, 2, 3, 4), 1, 0.9)
        t = TileSpec(0, 0, 300, 300, row=0, col=0)
        assert tile_to_scaled(r, t).box == r.box

    def test_full_tile(self):
        r = Region(BBox(0, 0, 300, 300), 1, 1.0)
        t = TileSpec(700, 700, 300, 300, row=3, col=3)
        assert tile_to_scaled(r, t).box == BBox(700, 700, 1000, 1000)


@given(
    x1=st.floats(0, 250),
    y1=st.floats(0, 250),
    w=st.floats(1, 49),
    h=st.floats(1, 49),
    ox=st.integers(0, 2000),
    oy=st.integers(0, 2000),
    scale=st.floats(0.2, 3.0),
)
def test_composition_matches_direct_affine(x1, y1, w, h, ox, oy, scale):
    r = Region(BBox(x1, y1, x1 + w, y1 + h), 1, 0.5)
    t = TileSpec(ox, oy, 300, 300, row=0, col=0)
    chained = to_original(tile_to_scaled(r, t).box, scale)
    direct = scale_box(
        BBox(x1 + ox, y1 + oy, x1 + w + ox, y1 + h + oy), 1.0 / scale
    )
    for got, expected in zip(chained.as_tuple(), direct.as_tuple()):
        assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)
