"""Pluggable per-tile inference backends.

Two implementations share one contract: a deterministic synthetic backend
that perturbs known ground truth (the test double used everywhere real
models are unavailable), and an external-process backend speaking a
line-oriented protocol over stdin/stdout so real models can run without
pulling an ML runtime into this package.

Synthetic randomness is counter-based and keyed on content coordinates
(seed, backend name, image id, scale, tile origin and size), never on call
order, so parallel tile scheduling cannot change results.
"""

from __future__ import annotations

import hashlib
import logging
import queue
import shlex
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .categories import NUM_CATEGORIES, SizeGroup, size_group_of
from .geometry import BBox, Region, clip, intersection_score, translate
from .tiling import TileSpec

log = logging.getLogger(__name__)

# Fraction of a ground-truth box's area that must fall inside a tile before
# the synthetic backend may emit it. Partially visible objects must remain
# detectable for overlapping tiles to recover split objects, but slivers
# should not be.
VISIBILITY_MIN_FRACTION = 0.25

DEFAULT_TIMEOUT = 60.0

# Tile edges each named backend expects. The single-resolution model takes
# one 300 px pass; the multi-resolution one runs three pass sizes whose
# outputs are concatenated.
KNOWN_BACKEND_SIZES: dict[str, tuple[int, ...]] = {
    "vanilla-sr": (300,),
    "multires-mr": (300, 400, 500),
}


class DetectorError(Exception):
    """A backend failed on one tile (crash, malformed reply, timeout)."""


class DetectorBackend:
    """Uniform inference contract: identical tile content and seed must
    yield identical output."""

    name: str = "backend"
    input_sizes: tuple[int, ...] = (300,)
    needs_pixels: bool = False
    concurrency_safe: bool = True

    @property
    def input_size(self) -> int:
        return self.input_sizes[0]

    def detect(
        self,
        pixels: Optional[np.ndarray],
        tile: TileSpec,
        *,
        image_id: str,
        scale: float = 1.0,
    ) -> list[Region]:
        raise NotImplementedError


@dataclass(frozen=True)
class ConfidenceModel:
    """Uniform confidence ranges for true and spurious detections."""

    true_low: float = 1.0
    true_high: float = 1.0
    false_low: float = 0.1
    false_high: float = 0.5

    def __post_init__(self) -> None:
        for lo, hi in ((self.true_low, self.true_high), (self.false_low, self.false_high)):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"confidence range must satisfy 0 <= low <= high <= 1, got ({lo}, {hi})")

    def draw(self, rng: np.random.Generator, true_positive: bool) -> float:
        lo, hi = (
            (self.true_low, self.true_high) if true_positive else (self.false_low, self.false_high)
        )
        return float(rng.uniform(lo, hi))


@dataclass(frozen=True)
class SyntheticDetectorParams:
    """Noise model for the synthetic backend.

    Defaults describe a perfect detector: nothing dropped, nothing invented,
    exact boxes at confidence 1.0.
    """

    jitter_px: float = 0.0
    drop_rate: float = 0.0
    fp_rate: float = 0.0
    confidence_model: ConfidenceModel = ConfidenceModel()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.jitter_px < 0:
            raise ValueError(f"jitter_px must be >= 0, got {self.jitter_px}")
        if not (0.0 <= self.drop_rate <= 1.0):
            raise ValueError(f"drop_rate must be in [0, 1], got {self.drop_rate}")
        if self.fp_rate < 0:
            raise ValueError(f"fp_rate must be >= 0, got {self.fp_rate}")


def _tile_rng(
    seed: int, backend_name: str, image_id: str, scale: float, tile: TileSpec
) -> np.random.Generator:
    """Generator keyed on tile content coordinates, stable across runs,
    platforms, and worker schedules."""
    key = (
        f"{seed}|{backend_name}|{image_id}|{scale!r}"
        f"|{tile.origin_x}|{tile.origin_y}|{tile.width}|{tile.height}"
    )
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def synthetic_detect(
    gt: Sequence[tuple[BBox, int]],
    tile: TileSpec,
    params: SyntheticDetectorParams,
    *,
    image_id: str,
    backend_name: str = "synthetic",
    scale: float = 1.0,
) -> list[Region]:
    """Emit noisy tile-local detections from scaled-frame ground truth.

    Each ground-truth box with more than VISIBILITY_MIN_FRACTION of its area
    inside the tile is independently kept with probability 1 - drop_rate,
    its corners jittered uniformly within +/- jitter_px, and clipped to the
    tile; Poisson(fp_rate) spurious boxes with random categories are added.
    """
    rng = _tile_rng(params.seed, backend_name, image_id, scale, tile)
    tile_box = BBox(
        tile.origin_x,
        tile.origin_y,
        tile.origin_x + tile.width,
        tile.origin_y + tile.height,
    )

    out: list[Region] = []
    for gt_box, category in gt:
        if intersection_score(gt_box, tile_box) <= VISIBILITY_MIN_FRACTION:
            continue
        drop_draw = rng.random()
        local = translate(gt_box, -tile.origin_x, -tile.origin_y)
        j = params.jitter_px
        dx1, dy1, dx2, dy2 = rng.uniform(-j, j, size=4) if j > 0 else (0.0, 0.0, 0.0, 0.0)
        confidence = params.confidence_model.draw(rng, True)
        if drop_draw < params.drop_rate:
            continue
        x1, y1 = local.x1 + dx1, local.y1 + dy1
        x2, y2 = local.x2 + dx2, local.y2 + dy2
        if x1 >= x2 or y1 >= y2:
            continue  # jitter collapsed the box
        clipped = clip(BBox(x1, y1, x2, y2), tile.width, tile.height)
        if clipped is None:
            continue
        out.append(Region(box=clipped, category=category, confidence=confidence))

    n_spurious = int(rng.poisson(params.fp_rate)) if params.fp_rate > 0 else 0
    for _ in range(n_spurious):
        cx = rng.uniform(0.0, tile.width)
        cy = rng.uniform(0.0, tile.height)
        w = rng.uniform(4.0, max(8.0, tile.width / 4))
        h = rng.uniform(4.0, max(8.0, tile.height / 4))
        category = int(rng.integers(1, NUM_CATEGORIES + 1))
        confidence = params.confidence_model.draw(rng, False)
        box = clip(BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), tile.width, tile.height)
        if box is None:
            continue
        out.append(Region(box=box, category=category, confidence=confidence))
    return out


class SyntheticDetector(DetectorBackend):
    """Backend that fabricates detections from known ground truth.

    Ground truth is held in original-image coordinates per image id; it is
    rescaled lazily (and cached) for whatever scale a pipeline runs at.
    ``delay_per_tile`` adds an artificial stall, handy for exercising budget
    enforcement.
    """

    needs_pixels = False
    concurrency_safe = True

    def __init__(
        self,
        ground_truth,
        params: SyntheticDetectorParams = SyntheticDetectorParams(),
        *,
        name: str = "synthetic",
        input_sizes: Sequence[int] = (300,),
        delay_per_tile: float = 0.0,
    ) -> None:
        self.name = name
        self.input_sizes = tuple(input_sizes)
        self.params = params
        self.delay_per_tile = delay_per_tile
        self._ground_truth = {img: tuple(entries) for img, entries in ground_truth.items()}
        self._scaled: dict[tuple[str, float], tuple[tuple[BBox, int], ...]] = {}
        self._cache_lock = threading.Lock()

    def _scaled_gt(self, image_id: str, scale: float) -> tuple[tuple[BBox, int], ...]:
        key = (image_id, scale)
        with self._cache_lock:
            cached = self._scaled.get(key)
            if cached is None:
                raw = self._ground_truth.get(image_id, ())
                cached = tuple(
                    (BBox(b.x1 * scale, b.y1 * scale, b.x2 * scale, b.y2 * scale), cat)
                    for b, cat in raw
                )
                self._scaled[key] = cached
        return cached

    def detect(self, pixels, tile, *, image_id, scale=1.0):
        if self.delay_per_tile > 0:
            time.sleep(self.delay_per_tile)
        gt = self._scaled_gt(image_id, scale)
        return synthetic_detect(
            gt, tile, self.params, image_id=image_id, backend_name=self.name, scale=scale
        )


class ExternalDetector(DetectorBackend):
    """Backend bridging to an external inference process.

    Protocol (text, line-delimited, UTF-8) per request:

        -> DETECT <image_id> <row> <col> <width> <height> <path-to-tile-png>
        <- BOX <x1> <y1> <x2> <y2> <category_id> <confidence>   (0..n lines)
        <- END

    The tile is handed over as an 8-bit RGB PNG file. Requests are strictly
    serialized (one outstanding request per process); a crash, malformed
    reply, or timeout raises DetectorError for that tile and the process is
    restarted on the next request.
    """

    needs_pixels = True
    concurrency_safe = False

    def __init__(
        self,
        name: str,
        command,
        *,
        input_sizes: Sequence[int] = (300,),
        timeout: float = DEFAULT_TIMEOUT,
    ) -> None:
        self.name = name
        self.input_sizes = tuple(input_sizes)
        self.timeout = timeout
        self._command = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc: Optional[subprocess.Popen] = None
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._tmpdir = tempfile.TemporaryDirectory(prefix="tilefuse-tiles-")

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(None)  # EOF marker

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._lines = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise DetectorError(f"could not start backend {self.name!r}: {exc}") from exc
        threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True).start()

    def _fail(self, message: str) -> DetectorError:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
        self._proc = None
        return DetectorError(f"backend {self.name!r}: {message}")

    def detect(self, pixels, tile, *, image_id, scale=1.0):
        if pixels is None:
            raise DetectorError(f"backend {self.name!r} requires tile pixels")
        with self._lock:
            self._ensure_started()
            tile_path = (
                Path(self._tmpdir.name)
                / f"{image_id}_{tile.width}x{tile.height}_{tile.row}_{tile.col}.png"
            )
            _write_tile_png(pixels, tile_path)
            try:
                request = (
                    f"DETECT {image_id} {tile.row} {tile.col} "
                    f"{tile.width} {tile.height} {tile_path}\n"
                )
                try:
                    self._proc.stdin.write(request)
                    self._proc.stdin.flush()
                except (BrokenPipeError, OSError) as exc:
                    raise self._fail(f"request failed ({exc})") from exc
                return self._read_response(tile)
            finally:
                tile_path.unlink(missing_ok=True)

    def _read_response(self, tile: TileSpec) -> list[Region]:
        deadline = time.monotonic() + self.timeout
        regions: list[Region] = []
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise self._fail(f"timed out after {self.timeout:g}s")
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise self._fail(f"timed out after {self.timeout:g}s") from None
            if line is None:
                raise self._fail("process exited mid-reply")
            line = line.strip()
            if not line:
                continue
            if line == "END":
                return regions
            parts = line.split()
            if parts[0] != "BOX" or len(parts) != 7:
                raise self._fail(f"malformed reply line: {line!r}")
            try:
                x1, y1, x2, y2 = (float(p) for p in parts[1:5])
                category = int(parts[5])
                confidence = float(parts[6])
                box = clip(BBox(x1, y1, x2, y2), tile.width, tile.height)
                if box is None:
                    continue
                regions.append(Region(box=box, category=category, confidence=confidence))
            except ValueError as exc:
                raise self._fail(f"malformed reply line: {line!r} ({exc})") from exc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None
        self._tmpdir.cleanup()

    def __enter__(self) -> "ExternalDetector":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _write_tile_png(pixels: np.ndarray, path: Path) -> None:
    from PIL import Image

    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def run_detection(
    backend: DetectorBackend,
    pixels: Optional[np.ndarray],
    tile: TileSpec,
    *,
    image_id: str,
    scale: float = 1.0,
) -> list[Region]:
    """Invoke a backend on one tile, enforcing the output contract.

    Boxes are clipped into the tile window; anything fully outside is
    dropped. Backend failures surface as DetectorError so the orchestrator
    can degrade that tile and keep going.
    """
    try:
        raw = backend.detect(pixels, tile, image_id=image_id, scale=scale)
    except DetectorError:
        raise
    except Exception as exc:
        raise DetectorError(
            f"backend {backend.name!r} failed on tile ({tile.row}, {tile.col}) "
            f"of {image_id!r}: {exc}"
        ) from exc

    out = []
    for r in raw:
        box = clip(r.box, tile.width, tile.height)
        if box is None:
            continue
        out.append(r if box == r.box else Region(box=box, category=r.category, confidence=r.confidence))
    return out


def filter_by_size_group(regions: Sequence[Region], allowed) -> list[Region]:
    """Keep regions whose category falls in one of the allowed size groups,
    preserving order. Unknown category ids raise KeyError naming the id."""
    allowed = frozenset(allowed)
    if not all(isinstance(g, SizeGroup) for g in allowed):
        raise TypeError("allowed must contain SizeGroup members")
    return [r for r in regions if size_group_of(r.category) in allowed]
