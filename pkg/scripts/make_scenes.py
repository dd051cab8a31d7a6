#!/usr/bin/env python3
"""Materialize synthetic scenes on disk: one PNG per scene plus a GeoJSON
ground-truth file, ready for the `tilefuse ensemble --gt ...` flow.

Example:
    python scripts/make_scenes.py --out /tmp/scenes --count 5 --seed 7 --clean
    tilefuse ensemble --images /tmp/scenes/images --config <cfg> \
        --gt /tmp/scenes/gt.geojson --out /tmp/scenes/dets.txt
"""

import argparse
from pathlib import Path

from PIL import Image

from tilefuse.formats import default_config_path, load_config, write_ground_truth
from tilefuse.scenes import generate_clean_scenes, generate_scenes, scenes_to_ground_truth


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--count", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--clean",
        action="store_true",
        help="place objects clear of every pipeline's tile boundaries",
    )
    parser.add_argument("--config", default=None, help="ensemble TOML (default: bundled)")
    args = parser.parse_args()

    if args.clean:
        ens = load_config(args.config if args.config else default_config_path())
        scenes = generate_clean_scenes(args.count, seed=args.seed, ens=ens)
    else:
        scenes = generate_scenes(args.count, seed=args.seed)

    images_dir = args.out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    for scene in scenes:
        Image.new("RGB", (scene.width, scene.height), (24, 32, 40)).save(
            images_dir / f"{scene.image_id}.png"
        )
    gt_path = args.out / "gt.geojson"
    write_ground_truth(scenes_to_ground_truth(scenes), gt_path)
    total = sum(len(s.objects) for s in scenes)
    print(f"wrote {len(scenes)} images to {images_dir} and {total} boxes to {gt_path}")


if __name__ == "__main__":
    main()
