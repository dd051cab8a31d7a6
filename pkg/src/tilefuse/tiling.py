"""Fixed-size tile grids over a (possibly rescaled) image.

Tiles march across each axis with stride ``tile - overlap``; a final tile
that would overrun the image is shifted back flush with the border, so the
detector always sees full-resolution, undistorted input and the last
column/row simply overlaps its neighbour a little more. An image smaller
than the tile in some dimension gets a single zero-origin tile flagged
``needs_padding``; the detector backend pads the missing bottom/right pixels
with zeros so no coordinate offsets appear.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import Region, translate


@dataclass(frozen=True)
class TileSpec:
    """One rectangular window of the scaled image, plus its grid position."""

    origin_x: int
    origin_y: int
    width: int
    height: int
    row: int
    col: int
    needs_padding: bool = False


@dataclass(frozen=True)
class TilePlan:
    """Row-major list of tiles covering every pixel of a scaled image."""

    image_width: int
    image_height: int
    tile_size: int
    overlap: int
    tiles: tuple[TileSpec, ...]


def _axis_origins(extent: int, tile: int, stride: int) -> tuple[list[int], bool]:
    """Origins along one axis, plus whether tiles overrun the image edge."""
    if extent < tile:
        return [0], True
    origins = []
    pos = 0
    while pos + tile <= extent:
        origins.append(pos)
        pos += stride
    if origins[-1] + tile < extent:
        # Shift the final tile flush with the border instead of padding it.
        origins.append(extent - tile)
    return origins, False


def plan_tiles(image_w: int, image_h: int, tile: int, overlap: int) -> TilePlan:
    """Plan the deterministic row-major tile grid for a scaled image.

    ``overlap`` is in pixels of the scaled frame and must be smaller than
    the tile edge (otherwise the stride would be non-positive).
    """
    if image_w <= 0 or image_h <= 0:
        raise ValueError(f"image extent must be positive, got {image_w}x{image_h}")
    if tile <= 0:
        raise ValueError(f"tile size must be positive, got {tile}")
    if not (0 <= overlap < tile):
        raise ValueError(f"overlap must satisfy 0 <= overlap < tile, got {overlap} vs {tile}")

    stride = tile - overlap
    xs, pad_x = _axis_origins(image_w, tile, stride)
    ys, pad_y = _axis_origins(image_h, tile, stride)

    tiles = []
    for row, oy in enumerate(ys):
        for col, ox in enumerate(xs):
            tiles.append(
                TileSpec(
                    origin_x=ox,
                    origin_y=oy,
                    width=tile,
                    height=tile,
                    row=row,
                    col=col,
                    needs_padding=pad_x or pad_y,
                )
            )
    return TilePlan(image_w, image_h, tile, overlap, tuple(tiles))


def tile_to_scaled(r: Region, t: TileSpec) -> Region:
    """Translate a tile-local detection into scaled-image coordinates."""
    return Region(
        box=translate(r.box, t.origin_x, t.origin_y),
        category=r.category,
        confidence=r.confidence,
    )
