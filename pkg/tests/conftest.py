import sys
import textwrap
from pathlib import Path

import pytest

# Let the suite run from a clean checkout without an editable install.
SRC_DIR = Path(__file__).resolve().parent.parent / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

# A minimal external detector speaking the line protocol. Modes:
#   center     -> one fixed box at the tile center, category 3, conf 0.75
#   echo-size  -> box edge encodes the received PNG's pixel size
#   garbage    -> malformed reply
#   sleep      -> never answers in time
#   crash      -> exits on first request
STUB_DETECTOR = textwrap.dedent(
    """
    import sys, time

    mode = sys.argv[1] if len(sys.argv) > 1 else "center"

    for line in sys.stdin:
        parts = line.split()
        if not parts or parts[0] != "DETECT":
            continue
        width, height, path = int(parts[4]), int(parts[5]), parts[6]
        if mode == "sleep":
            time.sleep(60)
        elif mode == "crash":
            sys.exit(1)
        elif mode == "garbage":
            print("BANANAS")
            sys.stdout.flush()
        else:
            if mode == "echo-size":
                from PIL import Image
                with Image.open(path) as img:
                    pw, ph = img.size
                print(f"BOX 0 0 {pw} {ph} 3 0.7500")
            else:
                cx, cy = width / 2, height / 2
                print(f"BOX {cx - 10:.1f} {cy - 10:.1f} {cx + 10:.1f} {cy + 10:.1f} 3 0.75")
            print("END")
            sys.stdout.flush()
    """
).strip()


@pytest.fixture
def stub_detector_cmd(tmp_path):
    """Returns a function mapping a stub mode to a runnable command list."""
    script = tmp_path / "stub_detector.py"
    script.write_text(STUB_DETECTOR + "\n")

    def command(mode="center"):
        return [sys.executable, str(script), mode]

    return command


@pytest.fixture
def clean_scene_dir(tmp_path):
    """Two tile-boundary-safe scenes on disk: PNG images plus GT GeoJSON."""
    from PIL import Image

    from tilefuse.formats import default_config_path, load_config, write_ground_truth
    from tilefuse.scenes import generate_clean_scenes, scenes_to_ground_truth

    ens = load_config(default_config_path())
    scenes = generate_clean_scenes(2, seed=2718, ens=ens)
    images_dir = tmp_path / "images"
    images_dir.mkdir()
    for scene in scenes:
        Image.new("RGB", (scene.width, scene.height), (24, 32, 40)).save(
            images_dir / f"{scene.image_id}.png"
        )
    gt_path = tmp_path / "gt.geojson"
    write_ground_truth(scenes_to_ground_truth(scenes), gt_path)
    return images_dir, gt_path, scenes
