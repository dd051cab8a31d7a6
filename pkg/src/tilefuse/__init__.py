"""tilefuse: tiled multi-pipeline object detection over very large aerial
images, with confidence-weighted fusion of the candidate regions and
interpolated mAP evaluation."""

from .categories import NUM_CATEGORIES, Rarity, SizeGroup
from .detector import (
    ConfidenceModel,
    DetectorBackend,
    DetectorError,
    ExternalDetector,
    SyntheticDetector,
    SyntheticDetectorParams,
    filter_by_size_group,
)
from .evaluation import EvalReport, evaluate
from .fusion import CategoryScope, FusionMode, FusionParams, OverlapMetric, fuse
from .geometry import BBox, Region
from .images import BlankImage, FileImage
from .pipeline import (
    BudgetConfig,
    BudgetExceeded,
    BudgetMonitor,
    EnsembleConfig,
    PipelineConfig,
    run_ensemble,
    run_many,
    run_pipeline,
)
from .tiling import TilePlan, TileSpec, plan_tiles

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BlankImage",
    "BudgetConfig",
    "BudgetExceeded",
    "BudgetMonitor",
    "CategoryScope",
    "ConfidenceModel",
    "DetectorBackend",
    "DetectorError",
    "EnsembleConfig",
    "EvalReport",
    "ExternalDetector",
    "FileImage",
    "FusionMode",
    "FusionParams",
    "NUM_CATEGORIES",
    "OverlapMetric",
    "PipelineConfig",
    "Rarity",
    "Region",
    "SizeGroup",
    "SyntheticDetector",
    "SyntheticDetectorParams",
    "TilePlan",
    "TileSpec",
    "evaluate",
    "filter_by_size_group",
    "fuse",
    "plan_tiles",
    "run_ensemble",
    "run_many",
    "run_pipeline",
]
