"""File formats: ground-truth GeoJSON, the text detection interchange
format, the TOML ensemble configuration, and run manifests.

The interchange format is one line per detection,

    <image_id> <x1> <y1> <x2> <y2> <category_id> <confidence>

with coordinates serialized to 2 decimals and confidence to 4, lines sorted
by image id, then confidence descending with the canonical tie-break.
Writing the result of a read reproduces the input byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .categories import NUM_CATEGORIES, SizeGroup
from .evaluation import GroundTruthSet
from .fusion import CategoryScope, FusionMode, FusionParams, OverlapMetric
from .geometry import BBox, Region
from .pipeline import BudgetConfig, EnsembleConfig, PipelineConfig
from .detector import KNOWN_BACKEND_SIZES

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

# Interchange serialization is 2-decimal; extents below its resolution
# would round degenerate.
MIN_SERIALIZABLE_EXTENT = 0.01


class DataError(ValueError):
    """A data file is malformed or violates an invariant."""


# ---------------------------------------------------------------------------
# Ground truth (GeoJSON)

def load_ground_truth(path) -> dict[str, list[tuple[BBox, int]]]:
    """Parse a GeoJSON FeatureCollection of annotated boxes.

    Each feature needs properties ``image_id`` (string), ``type_id``
    (category id), and ``bounds_imcoords`` ("x1,y1,x2,y2" in image pixels).
    Degenerate boxes are dropped; the total dropped is logged as a warning.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc

    features = doc.get("features")
    if not isinstance(features, list):
        raise DataError(f"{path}: expected a FeatureCollection with a 'features' list")

    gt: dict[str, list[tuple[BBox, int]]] = {}
    dropped = 0
    for index, feature in enumerate(features):
        props = feature.get("properties")
        if not isinstance(props, dict):
            raise DataError(f"{path}: feature {index}: missing properties")
        try:
            image_id = str(props["image_id"])
            type_id = int(props["type_id"])
            bounds = str(props["bounds_imcoords"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: feature {index}: bad properties: {exc}") from exc
        parts = bounds.split(",")
        if len(parts) != 4:
            raise DataError(f"{path}: feature {index}: bounds_imcoords must be 'x1,y1,x2,y2'")
        try:
            x1, y1, x2, y2 = (float(p) for p in parts)
        except ValueError as exc:
            raise DataError(f"{path}: feature {index}: non-numeric bounds: {exc}") from exc
        if not (1 <= type_id <= NUM_CATEGORIES):
            raise DataError(
                f"{path}: feature {index}: type_id {type_id} outside [1, {NUM_CATEGORIES}]"
            )
        if x1 >= x2 or y1 >= y2:
            dropped += 1
            continue
        gt.setdefault(image_id, []).append((BBox(x1, y1, x2, y2), type_id))

    if dropped:
        log.warning("%s: dropped %d degenerate ground-truth box(es)", path, dropped)
    return gt


def write_ground_truth(gts: GroundTruthSet, path) -> None:
    """Emit ground truth in the same GeoJSON dialect `load_ground_truth`
    reads (round-trip helper for synthetic scenes)."""
    features = []
    for image_id in sorted(gts):
        for box, cat in gts[image_id]:
            features.append(
                {
                    "type": "Feature",
                    "geometry": None,
                    "properties": {
                        "image_id": image_id,
                        "type_id": cat,
                        "bounds_imcoords": f"{box.x1:g},{box.y1:g},{box.x2:g},{box.y2:g}",
                    },
                }
            )
    doc = {"type": "FeatureCollection", "features": features}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Detection interchange

def _format_line(image_id: str, r: Region) -> str:
    b = r.box
    return (
        f"{image_id} {b.x1:.2f} {b.y1:.2f} {b.x2:.2f} {b.y2:.2f} "
        f"{r.category} {r.confidence:.4f}"
    )


def write_detections(dets, path) -> None:
    """Write a detection set in canonical line order.

    Boxes narrower than the 2-decimal serialization resolution cannot
    round-trip and are dropped with a warning.
    """
    rows = []
    skipped = 0
    for image_id, regions in dets.items():
        for r in regions:
            quantized = tuple(round(v, 2) for v in r.box.as_tuple())
            if quantized[2] - quantized[0] < MIN_SERIALIZABLE_EXTENT or (
                quantized[3] - quantized[1] < MIN_SERIALIZABLE_EXTENT
            ):
                skipped += 1
                continue
            key = (image_id, -round(r.confidence, 4), r.category) + quantized
            rows.append((key, _format_line(image_id, r)))
    if skipped:
        log.warning("%s: skipped %d box(es) below serialization resolution", path, skipped)
    rows.sort(key=lambda item: item[0])
    with open(path, "w", encoding="utf-8") as fh:
        for _, line in rows:
            fh.write(line + "\n")


def read_detections(path) -> dict[str, list[Region]]:
    """Parse the interchange format, validating every line."""
    path = Path(path)
    dets: dict[str, list[Region]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 7:
                raise DataError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
            image_id = parts[0]
            try:
                x1, y1, x2, y2 = (float(p) for p in parts[1:5])
                category = int(parts[5])
                confidence = float(parts[6])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if not (1 <= category <= NUM_CATEGORIES):
                raise DataError(
                    f"{path}:{lineno}: category {category} outside [1, {NUM_CATEGORIES}]"
                )
            if not (0.0 <= confidence <= 1.0):
                raise DataError(f"{path}:{lineno}: confidence {confidence} outside [0, 1]")
            try:
                region = Region(box=BBox(x1, y1, x2, y2), category=category, confidence=confidence)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            dets.setdefault(image_id, []).append(region)
    return dets


# ---------------------------------------------------------------------------
# Ensemble configuration (TOML)

_SIZE_GROUP_NAMES = {g.value: g for g in SizeGroup}
_METRIC_NAMES = {
    "iou": OverlapMetric.IOU,
    "is": OverlapMetric.INTERSECTION_SCORE,
    "intersection_score": OverlapMetric.INTERSECTION_SCORE,
}
_MODE_NAMES = {"select": FusionMode.SELECT, "merge": FusionMode.WEIGHTED_MERGE}
_SCOPE_NAMES = {s.value: s for s in CategoryScope}

_PIPELINE_KEYS = {"name", "scale", "overlap_px", "confidence_threshold", "backend", "size_groups"}
_FUSION_KEYS = {"sigma", "metric", "mode", "category_scope"}
_BUDGET_KEYS = {"per_image_seconds", "total_seconds", "memory_bytes"}


def parse_size_groups(names) -> frozenset[SizeGroup]:
    groups = set()
    for name in names:
        try:
            groups.add(_SIZE_GROUP_NAMES[str(name).lower()])
        except KeyError:
            raise DataError(
                f"unknown size group {name!r}; expected one of {sorted(_SIZE_GROUP_NAMES)}"
            ) from None
    return frozenset(groups)


def parse_metric(name: str) -> OverlapMetric:
    try:
        return _METRIC_NAMES[name.lower()]
    except KeyError:
        raise DataError(f"unknown overlap metric {name!r}; expected 'iou' or 'is'") from None


def parse_mode(name: str) -> FusionMode:
    try:
        return _MODE_NAMES[name.lower()]
    except KeyError:
        raise DataError(f"unknown fusion mode {name!r}; expected 'select' or 'merge'") from None


def parse_scope(name: str) -> CategoryScope:
    try:
        return _SCOPE_NAMES[name.lower()]
    except KeyError:
        raise DataError(
            f"unknown category scope {name!r}; expected one of {sorted(_SCOPE_NAMES)}"
        ) from None


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise DataError(f"{where}: unknown key(s) {unknown}; allowed keys are {sorted(allowed)}")


def _parse_overlap(raw, min_tile: int, where: str) -> int:
    """Overlap in pixels, or a percentage string like "50%" resolved
    against the backend's smallest tile edge at load time."""
    if isinstance(raw, str):
        text = raw.strip()
        if not text.endswith("%"):
            raise DataError(f"{where}: overlap_px must be pixels or 'NN%', got {raw!r}")
        try:
            fraction = float(text[:-1]) / 100.0
        except ValueError:
            raise DataError(f"{where}: overlap_px must be pixels or 'NN%', got {raw!r}") from None
        if not (0.0 <= fraction < 1.0):
            raise DataError(f"{where}: overlap percentage must be in [0, 100), got {raw!r}")
        return round(fraction * min_tile)
    return int(raw)


def _parse_pipeline(table: dict, index: int) -> PipelineConfig:
    where = f"[[pipeline]] #{index + 1}"
    _reject_unknown(table, _PIPELINE_KEYS, where)
    try:
        name = str(table["name"])
        scale = float(table["scale"])
        raw_overlap = table["overlap_px"]
        threshold = float(table["confidence_threshold"])
        backend = str(table["backend"])
        size_groups = parse_size_groups(table["size_groups"])
    except KeyError as exc:
        raise DataError(f"{where}: missing required key {exc.args[0]!r}") from None

    if backend not in KNOWN_BACKEND_SIZES:
        raise DataError(
            f"{where}: unknown backend {backend!r}; expected one of {sorted(KNOWN_BACKEND_SIZES)}"
        )
    min_tile = min(KNOWN_BACKEND_SIZES[backend])
    overlap_px = _parse_overlap(raw_overlap, min_tile, where)
    if not (0 <= overlap_px < min_tile):
        raise DataError(
            f"{where}: overlap_px must satisfy 0 <= overlap < tile size "
            f"({min_tile} for backend {backend!r}), got {overlap_px}"
        )
    try:
        return PipelineConfig(
            name=name,
            scale=scale,
            overlap_px=overlap_px,
            confidence_threshold=threshold,
            backend=backend,
            size_groups=size_groups,
        )
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from exc


def _parse_fusion(table: dict) -> FusionParams:
    _reject_unknown(table, _FUSION_KEYS, "[fusion]")
    defaults = FusionParams()
    try:
        sigma = float(table.get("sigma", defaults.sigma))
        metric = parse_metric(str(table.get("metric", defaults.metric.value)))
        mode = parse_mode(str(table.get("mode", defaults.mode.value)))
        scope = parse_scope(str(table.get("category_scope", defaults.category_scope.value)))
        return FusionParams(sigma=sigma, metric=metric, mode=mode, category_scope=scope)
    except ValueError as exc:
        raise DataError(f"[fusion]: {exc}") from exc


def _parse_budget(table: dict) -> BudgetConfig:
    _reject_unknown(table, _BUDGET_KEYS, "[budget]")
    defaults = BudgetConfig()
    try:
        return BudgetConfig(
            per_image_seconds=float(table.get("per_image_seconds", defaults.per_image_seconds)),
            total_seconds=float(table.get("total_seconds", defaults.total_seconds)),
            memory_bytes=int(table.get("memory_bytes", defaults.memory_bytes)),
        )
    except ValueError as exc:
        raise DataError(f"[budget]: {exc}") from exc


def load_config(path) -> EnsembleConfig:
    """Parse and validate a TOML ensemble configuration."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: invalid TOML: {exc}") from exc

    _reject_unknown(doc, {"pipeline", "fusion", "budget"}, str(path))
    pipelines_raw = doc.get("pipeline")
    if not pipelines_raw:
        raise DataError(f"{path}: at least one [[pipeline]] table is required")
    pipelines = tuple(_parse_pipeline(t, i) for i, t in enumerate(pipelines_raw))
    names = [p.name for p in pipelines]
    if len(set(names)) != len(names):
        raise DataError(f"{path}: pipeline names must be unique, got {names}")
    fusion = _parse_fusion(doc.get("fusion", {}))
    budget = _parse_budget(doc.get("budget", {}))
    return EnsembleConfig(pipelines=pipelines, fusion=fusion, budget=budget)


def default_config_path() -> Path:
    """The bundled five-pipeline configuration."""
    return Path(__file__).parent / "data" / "default_config.toml"


# ---------------------------------------------------------------------------
# Run manifest

@dataclass
class RunManifest:
    """Provenance record tying a detection file to its run parameters."""

    config_path: str
    config_sha256: str
    images: list[str]
    per_pipeline_counts: dict[str, int]
    fusion: dict
    budget_outcome: str  # "ok" or the breach kind
    partial: bool
    elapsed_seconds: float
    peak_memory_bytes: int
    workers: int
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        doc = {
            "config_path": self.config_path,
            "config_sha256": self.config_sha256,
            "images": list(self.images),
            "per_pipeline_counts": dict(self.per_pipeline_counts),
            "fusion": dict(self.fusion),
            "budget_outcome": self.budget_outcome,
            "partial": self.partial,
            "elapsed_seconds": self.elapsed_seconds,
            "peak_memory_bytes": self.peak_memory_bytes,
            "workers": self.workers,
        }
        if self.seed is not None:
            doc["seed"] = self.seed
        doc.update(self.extra)
        return doc


def fusion_params_dict(params: FusionParams) -> dict:
    return {
        "sigma": params.sigma,
        "metric": params.metric.value,
        "mode": params.mode.value,
        "category_scope": params.category_scope.value,
    }


def sha256_of_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(manifest: RunManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
