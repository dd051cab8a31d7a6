"""Image sources feeding the tiled pipelines.

A source exposes its original dimensions and hands out one scaled tile at a
time: the requested tile window is mapped back to the original frame,
cropped, and bilinearly resampled in a single step. The full rescaled image
is never materialized, which keeps peak memory at one tile buffer per
worker regardless of image or pyramid size.
"""

from __future__ import annotations

import math
import threading
from pathlib import Path

import numpy as np

from .tiling import TileSpec


def scaled_size(width: int, height: int, scale: float) -> tuple[int, int]:
    """Pixel dimensions of an image after rescaling (round half up, min 1)."""
    if not (scale > 0.0):
        raise ValueError(f"scale factor must be positive, got {scale}")
    return (max(1, math.floor(width * scale + 0.5)), max(1, math.floor(height * scale + 0.5)))


class ImageSource:
    """Dimensions plus on-demand scaled-tile pixels for one image."""

    image_id: str
    width: int
    height: int

    def read_scaled_tile(self, scale: float, tile: TileSpec) -> np.ndarray:
        """Return the tile's pixels as uint8 RGB of shape (tile.height,
        tile.width, 3), zero-padded on the bottom/right where the tile
        overruns the scaled image."""
        raise NotImplementedError


class FileImage(ImageSource):
    """PNG or TIFF raster on disk; the image id is the file stem.

    The original is decoded once (lazily, under a lock) and each scaled tile
    is produced by a boxed bilinear resize of the matching original-frame
    window.
    """

    def __init__(self, path) -> None:
        from PIL import Image

        self.path = Path(path)
        self.image_id = self.path.stem
        self._img = None
        self._lock = threading.Lock()
        with Image.open(self.path) as probe:
            self.width, self.height = probe.size

    def _pixels(self):
        from PIL import Image

        with self._lock:
            if self._img is None:
                with Image.open(self.path) as img:
                    self._img = img.convert("RGB")
                    self._img.load()
        return self._img

    def read_scaled_tile(self, scale: float, tile: TileSpec) -> np.ndarray:
        from PIL import Image

        img = self._pixels()
        sw, sh = scaled_size(self.width, self.height, scale)
        visible_w = min(tile.width, sw - tile.origin_x)
        visible_h = min(tile.height, sh - tile.origin_y)
        if visible_w <= 0 or visible_h <= 0:
            return np.zeros((tile.height, tile.width, 3), dtype=np.uint8)

        # Original-frame window corresponding to the visible tile area.
        box = (
            min(tile.origin_x / scale, self.width),
            min(tile.origin_y / scale, self.height),
            min((tile.origin_x + visible_w) / scale, self.width),
            min((tile.origin_y + visible_h) / scale, self.height),
        )
        patch = img.resize((visible_w, visible_h), resample=Image.BILINEAR, box=box)
        arr = np.asarray(patch, dtype=np.uint8)
        if visible_w == tile.width and visible_h == tile.height:
            return arr
        out = np.zeros((tile.height, tile.width, 3), dtype=np.uint8)
        out[:visible_h, :visible_w] = arr
        return out


class BlankImage(ImageSource):
    """Dimensions-only source yielding zero pixels.

    Synthetic backends ignore pixel content, so planning-scale experiments
    and memory tests can run on arbitrarily large virtual images.
    """

    def __init__(self, image_id: str, width: int, height: int) -> None:
        if width <= 0 or height <= 0:
            raise ValueError(f"image extent must be positive, got {width}x{height}")
        self.image_id = image_id
        self.width = width
        self.height = height

    def read_scaled_tile(self, scale: float, tile: TileSpec) -> np.ndarray:
        return np.zeros((tile.height, tile.width, 3), dtype=np.uint8)
