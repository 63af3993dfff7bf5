"""Generate a small synthetic point-symbol dataset from the bundled map.

Known symbols are painted out of the map body, the built-in glyph templates
are pasted with random rotation, scale and blur, and YOLO-style labels are
written next to each image.  A second run with the same seed reproduces the
files byte for byte.
"""

import filecmp
import json
import tempfile
from pathlib import Path

from mapdigit.fixtures import render_map, truth_layout
from mapdigit.synth import GenConfig, default_templates, generate_dataset, make_basemaps

fx = render_map()
basemaps = make_basemaps(fx.raster, truth_layout(), [b for _, b in fx.point_boxes])
cfg = GenConfig(total_patches=24, patch_size=400, per_class_target=8, seed=1)
tmp = Path(tempfile.mkdtemp(prefix="mapdigit-synth-"))

manifest = generate_dataset(basemaps, default_templates(), cfg, tmp / "a")
generate_dataset(basemaps, default_templates(), cfg, tmp / "b")
print(json.dumps(manifest["per_class_patch_counts"], indent=1))
same = all(filecmp.cmp(p, tmp / "b" / p.relative_to(tmp / "a"), shallow=False)
           for p in (tmp / "a").rglob("*") if p.is_file())
print("identical reruns:", same)
print("first label file:\n" + (tmp / "a" / "labels" / "00000.txt").read_text())
