"""Command-line interface.

Subcommands: ``plan`` (tile-grid CSV), ``detect`` (one pipeline, one
image), ``ensemble`` (all pipelines over an image directory), ``fuse``
(merge detection files), ``eval`` (score against ground truth), and
``analyze`` (dataset statistics).

Exit codes: 0 success, 1 usage error, 2 data error, 3 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import formats
from .categories import name_of
from .detector import (
    DEFAULT_TIMEOUT,
    KNOWN_BACKEND_SIZES,
    ConfidenceModel,
    ExternalDetector,
    SyntheticDetector,
    SyntheticDetectorParams,
)
from .evaluation import (
    EvaluationError,
    cooccurrence_matrix,
    evaluate,
    size_histogram,
    spatial_graph,
)
from .formats import DataError
from .fusion import FusionParams, fuse
from .images import FileImage
from .pipeline import (
    BudgetExceeded,
    BudgetMonitor,
    EnsembleConfig,
    resolve_workers,
    run_many,
    run_pipeline,
)
from .tiling import plan_tiles

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".tif", ".tiff")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BUDGET = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this artifact reserves 2 for data
    errors, so remap usage failures to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    pass


def _add_backend_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("backend selection")
    group.add_argument("--gt", type=Path, help="ground-truth GeoJSON enabling synthetic backends")
    group.add_argument("--seed", type=int, default=0, help="seed for all synthetic randomness")
    group.add_argument("--jitter", type=float, default=0.0, help="synthetic corner jitter (px)")
    group.add_argument("--drop-rate", type=float, default=0.0, help="synthetic miss probability")
    group.add_argument("--fp-rate", type=float, default=0.0, help="spurious boxes per tile (Poisson mean)")
    group.add_argument(
        "--true-conf", type=float, nargs=2, default=(1.0, 1.0), metavar=("LO", "HI"),
        help="confidence range for true synthetic detections",
    )
    group.add_argument(
        "--false-conf", type=float, nargs=2, default=(0.1, 0.5), metavar=("LO", "HI"),
        help="confidence range for spurious synthetic detections",
    )
    group.add_argument(
        "--synthetic-delay", type=float, default=0.0,
        help="artificial stall per synthetic tile (seconds), for budget testing",
    )
    group.add_argument(
        "--backend-cmd", action="append", default=[], metavar="NAME=COMMAND",
        help="attach an external process detector to a backend name (repeatable)",
    )
    group.add_argument(
        "--backend-timeout", type=float, default=DEFAULT_TIMEOUT,
        help="per-request timeout for external backends (seconds)",
    )


def _build_backends(needed, args):
    """Construct one backend per required name; external commands win over
    the synthetic fallback."""
    commands = {}
    for entry in args.backend_cmd:
        name, sep, command = entry.partition("=")
        if not sep or not name or not command:
            raise UsageError(f"--backend-cmd expects NAME=COMMAND, got {entry!r}")
        commands[name] = command

    gt = formats.load_ground_truth(args.gt) if args.gt is not None else None
    params = SyntheticDetectorParams(
        jitter_px=args.jitter,
        drop_rate=args.drop_rate,
        fp_rate=args.fp_rate,
        confidence_model=ConfidenceModel(
            true_low=args.true_conf[0],
            true_high=args.true_conf[1],
            false_low=args.false_conf[0],
            false_high=args.false_conf[1],
        ),
        seed=args.seed,
    )

    backends = {}
    for name in sorted(needed):
        sizes = KNOWN_BACKEND_SIZES.get(name)
        if sizes is None:
            raise DataError(f"no input sizes known for backend {name!r}")
        if name in commands:
            backends[name] = ExternalDetector(
                name, commands[name], input_sizes=sizes, timeout=args.backend_timeout
            )
        elif gt is not None:
            backends[name] = SyntheticDetector(
                gt, params, name=name, input_sizes=sizes, delay_per_tile=args.synthetic_delay
            )
        else:
            raise UsageError(
                f"backend {name!r} has no implementation: pass --gt for a synthetic "
                f"backend or --backend-cmd {name}=COMMAND for an external one"
            )
    return backends


def _close_backends(backends) -> None:
    for backend in backends.values():
        close = getattr(backend, "close", None)
        if close is not None:
            close()


def _collect_images(directory: Path) -> list[FileImage]:
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise DataError(f"{directory}: no {'/'.join(IMAGE_SUFFIXES)} images found")
    return [FileImage(p) for p in paths]


def _write_run_outputs(args, ens: EnsembleConfig, result, monitor, workers) -> None:
    formats.write_detections(result.detections, args.out)
    if getattr(args, "manifest", None) is not None:
        manifest = formats.RunManifest(
            config_path=str(args.config),
            config_sha256=formats.sha256_of_file(args.config),
            images=result.images_done,
            per_pipeline_counts=result.per_pipeline_counts,
            fusion=formats.fusion_params_dict(ens.fusion),
            budget_outcome=result.breach.kind if result.breach else "ok",
            partial=result.partial,
            elapsed_seconds=monitor.elapsed_total,
            peak_memory_bytes=monitor.peak_memory_bytes,
            workers=workers,
            seed=args.seed,
        )
        formats.write_manifest(manifest, args.manifest)


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_plan(args) -> int:
    plan = plan_tiles(args.width, args.height, args.tile, args.overlap)
    out = sys.stdout
    out.write("row,col,origin_x,origin_y,width,height\n")
    for t in plan.tiles:
        out.write(f"{t.row},{t.col},{t.origin_x},{t.origin_y},{t.width},{t.height}\n")
    return EXIT_OK


def _cmd_detect(args) -> int:
    ens = formats.load_config(args.config)
    cfg = ens.pipeline(args.pipeline)
    backends = _build_backends({cfg.backend}, args)
    code = EXIT_OK
    try:
        image = FileImage(args.image)
        monitor = BudgetMonitor(ens.budget)
        monitor.start_image()
        try:
            regions = run_pipeline(
                image, cfg, backends[cfg.backend],
                workers=resolve_workers(args.workers), monitor=monitor,
            )
        except BudgetExceeded as exc:
            log.error("aborted: %s", exc.breach.describe())
            regions = exc.partial
            code = EXIT_BUDGET
        formats.write_detections({image.image_id: regions}, args.out)
    finally:
        _close_backends(backends)
    return code


def _cmd_ensemble(args) -> int:
    ens = formats.load_config(args.config)
    images = _collect_images(args.images)
    workers = resolve_workers(args.workers)
    backends = _build_backends({cfg.backend for cfg in ens.pipelines}, args)
    try:
        monitor = BudgetMonitor(ens.budget)
        result = run_many(images, ens, backends, workers=workers, monitor=monitor)
        _write_run_outputs(args, ens, result, monitor, workers)
    finally:
        _close_backends(backends)
    if result.partial:
        log.error("run aborted: %s", result.breach.describe())
        return EXIT_BUDGET
    return EXIT_OK


def _cmd_fuse(args) -> int:
    merged: dict[str, list] = {}
    for path in args.inputs:
        for image_id, regions in formats.read_detections(path).items():
            merged.setdefault(image_id, []).extend(regions)
    params = FusionParams(
        sigma=args.sigma,
        metric=formats.parse_metric(args.metric),
        mode=formats.parse_mode(args.mode),
        category_scope=formats.parse_scope(args.scope),
    )
    fused = {image_id: fuse(regions, params) for image_id, regions in merged.items()}
    formats.write_detections(fused, args.out)
    return EXIT_OK


def _cmd_eval(args) -> int:
    gts = formats.load_ground_truth(args.gt)
    dets = formats.read_detections(args.dets)
    report = evaluate(dets, gts, args.iou_min, strict=not args.allow_equal_iou)
    print(report.format_table(name_of=name_of))
    if args.report is not None:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    if args.cooccurrence is None and args.graph is None and args.histogram is None:
        raise UsageError("nothing to do: pass --cooccurrence, --graph, and/or --histogram")
    gts = formats.load_ground_truth(args.gt)

    if args.cooccurrence is not None:
        matrix = cooccurrence_matrix(gts)
        names = [name_of(i + 1) for i in range(matrix.shape[0])]
        with open(args.cooccurrence, "w", encoding="utf-8") as fh:
            fh.write("category," + ",".join(names) + "\n")
            for i, name in enumerate(names):
                fh.write(name + "," + ",".join(str(v) for v in matrix[i]) + "\n")

    if args.graph is not None:
        with open(args.graph, "w", encoding="utf-8") as fh:
            fh.write("graph spatial {\n")
            for image_id in sorted(gts):
                entries = gts[image_id]
                for i, (_, cat) in enumerate(entries):
                    fh.write(f'  "{image_id}/{i}" [label="{name_of(cat)}"];\n')
                boxes = [box for box, _ in entries]
                for i, j, d in spatial_graph(boxes, args.knn):
                    fh.write(f'  "{image_id}/{i}" -- "{image_id}/{j}" [label="{d:.1f}"];\n')
            fh.write("}\n")

    if args.histogram is not None:
        hist = size_histogram(gts)
        with open(args.histogram, "w", encoding="utf-8") as fh:
            fh.write("min_px,max_px,count\n")
            for lo, hi, count in hist.rows():
                fh.write(f"{lo:g},{hi:g},{count}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tilefuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="emit a tile grid as CSV")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--tile", type=int, required=True)
    p.add_argument("--overlap", type=int, default=0)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("detect", help="run one pipeline on one image")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--pipeline", required=True, help="pipeline name from the config")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=None)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("ensemble", help="run all configured pipelines over a directory of images")
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--workers", type=int, default=None)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("fuse", help="fuse detection files")
    p.add_argument("--in", dest="inputs", type=Path, nargs="+", required=True)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--metric", choices=["iou", "is"], default="iou")
    p.add_argument("--mode", choices=["select", "merge"], default="merge")
    p.add_argument(
        "--scope", choices=["per_category", "category_agnostic"], default="per_category"
    )
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--dets", type=Path, required=True)
    p.add_argument("--iou-min", type=float, default=0.5)
    p.add_argument(
        "--allow-equal-iou", action="store_true",
        help="match at IoU == threshold too (default requires strictly above)",
    )
    p.add_argument("--report", type=Path, default=None, help="write the report as JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("analyze", help="dataset statistics from ground truth")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--cooccurrence", type=Path, default=None, help="write co-occurrence CSV here")
    p.add_argument("--graph", type=Path, default=None, help="write spatial graph DOT here")
    p.add_argument("--histogram", type=Path, default=None, help="write size histogram CSV here")
    p.add_argument("--knn", type=int, default=3, help="neighbours per region in the graph")
    p.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tilefuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"tilefuse: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (DataError, EvaluationError, OSError, KeyError, ValueError) as exc:
        message = exc.args[0] if exc.args else exc
        print(f"tilefuse: data error: {message}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
