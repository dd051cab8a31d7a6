"""End-to-end pipeline execution: scale, split, detect, remap, threshold,
size-filter, and the multi-pipeline ensemble run under wall-clock and
memory budgets.

One pipeline is one parameter row: a scale factor, a tile overlap, a
confidence threshold, a backend, and the size groups it is responsible
for. The ensemble concatenates all pipeline outputs and hands them to the
fusion stage. All orderings are canonical, so permuting tile completion or
pipeline execution order cannot change results.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .categories import SizeGroup
from .detector import DetectorBackend, DetectorError, filter_by_size_group, run_detection
from .fusion import FusionParams, fuse
from .geometry import Region, clip, sort_regions, to_original
from .images import ImageSource, scaled_size
from .tiling import TileSpec, plan_tiles, tile_to_scaled

log = logging.getLogger(__name__)

WORKERS_ENV_VAR = "TILEFUSE_WORKERS"


@dataclass(frozen=True)
class PipelineConfig:
    """Parameters of one scale/tile/detect pass."""

    name: str
    scale: float
    overlap_px: int
    confidence_threshold: float
    backend: str
    size_groups: frozenset[SizeGroup]

    def __post_init__(self) -> None:
        if not (self.scale > 0.0):
            raise ValueError(f"pipeline {self.name!r}: scale must be positive, got {self.scale}")
        if self.overlap_px < 0:
            raise ValueError(f"pipeline {self.name!r}: overlap_px must be >= 0")
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ValueError(
                f"pipeline {self.name!r}: confidence_threshold must be in [0, 1], "
                f"got {self.confidence_threshold}"
            )
        if not self.size_groups:
            raise ValueError(f"pipeline {self.name!r}: size_groups must not be empty")
        object.__setattr__(self, "size_groups", frozenset(self.size_groups))


@dataclass(frozen=True)
class BudgetConfig:
    """Resource limits: per-image and total wall clock, peak memory."""

    per_image_seconds: float = 2400.0
    total_seconds: float = 259200.0
    memory_bytes: int = 8 * 2**30

    def __post_init__(self) -> None:
        if self.per_image_seconds <= 0 or self.total_seconds <= 0 or self.memory_bytes <= 0:
            raise ValueError("budget limits must all be positive")


@dataclass(frozen=True)
class EnsembleConfig:
    pipelines: tuple[PipelineConfig, ...]
    fusion: FusionParams = FusionParams()
    budget: BudgetConfig = BudgetConfig()

    def __post_init__(self) -> None:
        if not self.pipelines:
            raise ValueError("ensemble needs at least one pipeline")
        object.__setattr__(self, "pipelines", tuple(self.pipelines))

    def pipeline(self, name: str) -> PipelineConfig:
        for cfg in self.pipelines:
            if cfg.name == name:
                return cfg
        raise KeyError(f"no pipeline named {name!r} (have {[c.name for c in self.pipelines]})")


@dataclass(frozen=True)
class BudgetBreach:
    kind: str  # "per_image_time" | "total_time" | "memory"
    value: float
    limit: float

    def describe(self) -> str:
        unit = "bytes" if self.kind == "memory" else "s"
        return f"{self.kind} limit exceeded: {self.value:.0f} {unit} > {self.limit:.0f} {unit}"


class BudgetExceeded(Exception):
    """Raised when a limit trips mid-run; carries whatever was finished."""

    def __init__(self, breach: BudgetBreach, partial: Sequence[Region] = ()) -> None:
        super().__init__(breach.describe())
        self.breach = breach
        self.partial = list(partial)


def _process_rss() -> int:
    import psutil

    return psutil.Process().memory_info().rss


class BudgetMonitor:
    """Tracks elapsed wall clock and peak resident memory against limits.

    The clock and memory probe are injectable so limit boundaries can be
    tested without sleeping or actually allocating gigabytes.
    """

    def __init__(
        self,
        config: BudgetConfig,
        *,
        clock: Callable[[], float] = time.monotonic,
        memory_probe: Callable[[], int] = _process_rss,
    ) -> None:
        self.config = config
        self._clock = clock
        self._memory_probe = memory_probe
        self._run_start = clock()
        self._image_start = self._run_start
        self.peak_memory_bytes = 0

    def start_image(self) -> None:
        self._image_start = self._clock()

    @property
    def elapsed_total(self) -> float:
        return self._clock() - self._run_start

    @property
    def elapsed_image(self) -> float:
        return self._clock() - self._image_start

    def check(self) -> Optional[BudgetBreach]:
        """Sample memory, then report the first limit found tripped."""
        self.peak_memory_bytes = max(self.peak_memory_bytes, self._memory_probe())
        if self.elapsed_image > self.config.per_image_seconds:
            return BudgetBreach("per_image_time", self.elapsed_image, self.config.per_image_seconds)
        if self.elapsed_total > self.config.total_seconds:
            return BudgetBreach("total_time", self.elapsed_total, self.config.total_seconds)
        if self.peak_memory_bytes > self.config.memory_bytes:
            return BudgetBreach("memory", self.peak_memory_bytes, self.config.memory_bytes)
        return None


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count for tile dispatch; the environment variable wins."""
    env = os.environ.get(WORKERS_ENV_VAR)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{WORKERS_ENV_VAR} must be >= 1, got {value}")
        return value
    if requested is not None:
        if requested < 1:
            raise ValueError(f"worker count must be >= 1, got {requested}")
        return requested
    return 1


def _detect_tile(
    image: ImageSource,
    scale: float,
    tile: TileSpec,
    backend: DetectorBackend,
) -> list[Region]:
    pixels = image.read_scaled_tile(scale, tile) if backend.needs_pixels else None
    try:
        return run_detection(backend, pixels, tile, image_id=image.image_id, scale=scale)
    except DetectorError as exc:
        log.warning("tile (%d, %d) of %r degraded: %s", tile.row, tile.col, image.image_id, exc)
        return []


def _postprocess(
    raw: Iterable[tuple[TileSpec, list[Region]]],
    image: ImageSource,
    cfg: PipelineConfig,
) -> list[Region]:
    """Remap tile-local detections to the original frame, then threshold,
    size-filter, and sort."""
    remapped = []
    for tile, regions in raw:
        for r in regions:
            scaled = tile_to_scaled(r, tile)
            original = to_original(scaled.box, cfg.scale)
            box = clip(original, image.width, image.height)
            if box is None:
                continue
            remapped.append(Region(box=box, category=r.category, confidence=r.confidence))
    kept = [r for r in remapped if r.confidence >= cfg.confidence_threshold]
    kept = filter_by_size_group(kept, cfg.size_groups)
    return sort_regions(kept)


def run_pipeline(
    image: ImageSource,
    cfg: PipelineConfig,
    backend: DetectorBackend,
    *,
    workers: int = 1,
    monitor: Optional[BudgetMonitor] = None,
) -> list[Region]:
    """Run one pipeline over one image, returning original-frame regions.

    Multi-resolution backends run one pass per input size, sequentially, so
    only a single plan's tile buffers are ever alive at once. Raises
    BudgetExceeded (carrying post-processed partial results) when the
    monitor trips.
    """
    sw, sh = scaled_size(image.width, image.height, cfg.scale)
    effective_workers = workers if backend.concurrency_safe else 1
    collected: list[tuple[TileSpec, list[Region]]] = []

    def aborted() -> Optional[BudgetBreach]:
        return monitor.check() if monitor is not None else None

    for tile_size in backend.input_sizes:
        plan = plan_tiles(sw, sh, tile_size, cfg.overlap_px)
        if effective_workers <= 1:
            for tile in plan.tiles:
                collected.append((tile, _detect_tile(image, cfg.scale, tile, backend)))
                breach = aborted()
                if breach is not None:
                    raise BudgetExceeded(breach, partial=_postprocess(collected, image, cfg))
        else:
            with ThreadPoolExecutor(max_workers=effective_workers) as pool:
                futures = [
                    pool.submit(_detect_tile, image, cfg.scale, tile, backend)
                    for tile in plan.tiles
                ]
                for tile, future in zip(plan.tiles, futures):
                    collected.append((tile, future.result()))
                    breach = aborted()
                    if breach is not None:
                        pool.shutdown(wait=False, cancel_futures=True)
                        raise BudgetExceeded(breach, partial=_postprocess(collected, image, cfg))
    return _postprocess(collected, image, cfg)


@dataclass
class EnsembleOutcome:
    """Fused detections for one image plus per-pipeline audit data."""

    regions: list[Region]
    per_pipeline: dict[str, list[Region]] = field(default_factory=dict)
    breach: Optional[BudgetBreach] = None

    @property
    def partial(self) -> bool:
        return self.breach is not None

    @property
    def per_pipeline_counts(self) -> dict[str, int]:
        return {name: len(regions) for name, regions in self.per_pipeline.items()}


def run_ensemble(
    image: ImageSource,
    ens: EnsembleConfig,
    backends: Mapping[str, DetectorBackend],
    *,
    workers: int = 1,
    monitor: Optional[BudgetMonitor] = None,
) -> EnsembleOutcome:
    """Run every pipeline over one image and fuse the union of candidates.

    A pipeline whose backend is wholly unavailable degrades to an empty
    contribution; a budget breach stops the remaining pipelines and fuses
    what was gathered, flagging the outcome as partial.
    """
    per_pipeline: dict[str, list[Region]] = {}
    breach: Optional[BudgetBreach] = None
    for cfg in ens.pipelines:
        try:
            backend = backends[cfg.backend]
        except KeyError:
            raise KeyError(f"pipeline {cfg.name!r} wants unknown backend {cfg.backend!r}") from None
        try:
            per_pipeline[cfg.name] = run_pipeline(
                image, cfg, backend, workers=workers, monitor=monitor
            )
        except BudgetExceeded as exc:
            per_pipeline[cfg.name] = exc.partial
            breach = exc.breach
            log.warning("image %r aborted: %s", image.image_id, exc.breach.describe())
            break
        except DetectorError as exc:
            per_pipeline[cfg.name] = []
            log.warning("pipeline %r degraded to empty output: %s", cfg.name, exc)

    candidates = [r for regions in per_pipeline.values() for r in regions]
    fused = fuse(candidates, ens.fusion)
    return EnsembleOutcome(regions=fused, per_pipeline=per_pipeline, breach=breach)


@dataclass
class RunResult:
    """Ensemble outputs over a set of images."""

    detections: dict[str, list[Region]] = field(default_factory=dict)
    per_pipeline_counts: dict[str, int] = field(default_factory=dict)
    breach: Optional[BudgetBreach] = None
    images_done: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return self.breach is not None


def run_many(
    images: Iterable[ImageSource],
    ens: EnsembleConfig,
    backends: Mapping[str, DetectorBackend],
    *,
    workers: int = 1,
    monitor: Optional[BudgetMonitor] = None,
) -> RunResult:
    """Run the ensemble over many images, stopping at the first breach."""
    result = RunResult()
    for name in (cfg.name for cfg in ens.pipelines):
        result.per_pipeline_counts[name] = 0
    for image in images:
        if monitor is not None:
            monitor.start_image()
        outcome = run_ensemble(image, ens, backends, workers=workers, monitor=monitor)
        result.detections[image.image_id] = outcome.regions
        for name, count in outcome.per_pipeline_counts.items():
            result.per_pipeline_counts[name] += count
        result.images_done.append(image.image_id)
        if outcome.breach is not None:
            result.breach = outcome.breach
            break
    return result
