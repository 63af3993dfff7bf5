"""A bundled synthetic 2500x2500 map sheet with planted truth and stub
responses, used by the offline end-to-end pipeline, the demos and tests.

Everything is generated procedurally from a seed, so nothing binary ships
with the package.  ``write_fixture(dir)`` lays out::

    map.png                 the sheet
    config.yaml, job.yaml   pipeline configuration and the end-to-end job
    stub/                   canned model responses (layout, labels, title)
    detector/               canned point detections
    matcher/, topo/         planted keypoint matches and candidate topo rasters
    topo_index.csv          quadrangle index
    raw_lines.json          noisy line graph standing in for a line model
    truth/                  planted GCPs, layout, polygons, lines and points
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from PIL import Image, ImageDraw

from .geometry import GeoBBox, GeoPoint, GroundControlPoint, PixelBBox, PixelPoint, affine_from_bbox
from .io import save_gcps, save_layout, write_json
from .model import FeatureKind, GcpSet, LegendItem, LineGraph, MapLayout, PointFeature, RasterMap, VectorFeatureSet
from .synth import default_templates

SIZE = 2500
# neatline crossings (pixel centres) and the quadrangle they bound
NEATLINE = PixelBBox(200, 300, 1800, 2100)
GEO = GeoBBox(-75.375, 40.75, -75.25, 40.875)
CONTENT_GUESS = PixelBBox(196, 295, 1805, 2104)
LEGEND_REGION = PixelBBox(1950, 300, 2450, 1200)
TITLE_BOX = PixelBBox(300, 2220, 1700, 2260)
TITLE = "Geologic Map of the Nazareth Quadrangle, Northampton County, Pennsylvania"
MAP_ID = "map"

UNITS = (
    ("Om", (222, 196, 150), "Martinsburg Formation"),
    ("Qal", (250, 230, 90), "Alluvium"),
    ("Oj", (150, 190, 230), "Jacksonburg Limestone"),
)
FAULT_COLOR = (180, 30, 30)
INK = (0, 0, 0)
FAULTS = (
    [(350, 500), (700, 760), (1050, 900), (1500, 1350)],
    [(600, 1900), (900, 1600), (1350, 1500), (1700, 1150)],
)
POINTS = (
    ("inclined_bedding", (450, 1200)),
    ("inclined_bedding", (1300, 650)),
    ("vertical_bedding", (900, 1300)),
    ("mine_shaft", (1500, 1800)),
    ("horizontal_bedding", (700, 1750)),
    ("prospect", (1600, 500)),
)
TOPO = (
    ("nazareth", "Nazareth", "PA", "Northampton", GEO),
    ("wind-gap", "Wind Gap", "PA", "Northampton", GeoBBox(-75.375, 40.875, -75.25, 41.0)),
    ("bath", "Bath", "PA", "Northampton", GeoBBox(-75.5, 40.75, -75.375, 40.875)),
    ("easton", "Easton", "PA", "Northampton", GeoBBox(-75.25, 40.625, -75.125, 40.75)),
    ("boulder", "Boulder", "CO", "Boulder", GeoBBox(-105.375, 40.0, -105.25, 40.125)),
)
TOPO_RASTER = (800, 900)  # candidate raster for the Nazareth record: content scaled by 1/2


def truth_homography():
    """Planted pixel -> (lon, lat) transform of the sheet."""
    scale = PixelBBox(0, 0, NEATLINE.width, NEATLINE.height)
    from .geometry import Homography

    shift = Homography(np.array([[1, 0, -NEATLINE.xmin], [0, 1, -NEATLINE.ymin], [0, 0, 1]], dtype=float))
    return shift.then(affine_from_bbox(GEO, scale.width, scale.height))


def truth_gcps() -> GcpSet:
    h = truth_homography()
    corners = [PixelPoint(NEATLINE.xmin, NEATLINE.ymin), PixelPoint(NEATLINE.xmax, NEATLINE.ymin),
               PixelPoint(NEATLINE.xmin, NEATLINE.ymax), PixelPoint(NEATLINE.xmax, NEATLINE.ymax)]
    gcps = [GroundControlPoint(p, GeoPoint(*tuple(h(p))), 1.0) for p in corners]
    return GcpSet(MAP_ID, gcps, h, {"raster_size": [SIZE, SIZE]})


def _dms(value: float, axis: str) -> str:
    hemi = ("N" if value >= 0 else "S") if axis == "lat" else ("E" if value >= 0 else "W")
    v = abs(value)
    d = int(v)
    m_full = (v - d) * 60
    m = int(round(m_full, 9))
    s = round((m_full - m) * 60, 6)
    return f"{d}°{m:02d}'{s:02.0f}\"{hemi}"


def coordinate_labels() -> list[dict]:
    """Eight corner labels: a latitude beside and a longitude above/below
    each neatline corner."""
    out = []
    for x, lon in ((NEATLINE.xmin, GEO.min_lon), (NEATLINE.xmax, GEO.max_lon)):
        for y, lat in ((NEATLINE.ymin, GEO.max_lat), (NEATLINE.ymax, GEO.min_lat)):
            dx = -70 if x == NEATLINE.xmin else 70
            dy = -25 if y == NEATLINE.ymin else 25
            out.append({"text": _dms(lat, "lat"), "x": x + dx, "y": y, "axis": "lat"})
            out.append({"text": _dms(lon, "lon"), "x": x, "y": y + dy, "axis": "lon"})
    return out


def _legend_items() -> list[LegendItem]:
    items = []
    y = LEGEND_REGION.ymin + 40
    for label, _, text in UNITS:
        items.append(LegendItem(label, FeatureKind.POLYGON, PixelBBox(1980, y, 2060, y + 40),
                                PixelBBox(2080, y, 2440, y + 40), text))
        y += 80
    items.append(LegendItem("fault", FeatureKind.LINE, PixelBBox(1980, y, 2060, y + 40),
                            PixelBBox(2080, y, 2440, y + 40), "Fault"))
    y += 80
    for cls in sorted({c for c, _ in POINTS}):
        items.append(LegendItem(cls, FeatureKind.POINT, PixelBBox(1980, y, 2060, y + 60),
                                PixelBBox(2080, y, 2440, y + 60), cls.replace("_", " ").capitalize()))
        y += 80
    return items


def stub_layout() -> MapLayout:
    return MapLayout(CONTENT_GUESS, (LEGEND_REGION,), TITLE_BOX, tuple(_legend_items()))


def truth_layout() -> MapLayout:
    content = PixelBBox(NEATLINE.xmin - 1, NEATLINE.ymin - 1, NEATLINE.xmax + 2, NEATLINE.ymax + 2)
    return MapLayout(content, (LEGEND_REGION,), TITLE_BOX, tuple(_legend_items()))


def _unit_grid() -> np.ndarray:
    """Unit index per pixel inside the neatline (255 elsewhere)."""
    grid = np.full((SIZE, SIZE), 255, dtype=np.uint8)
    inner = (slice(NEATLINE.ymin + 2, NEATLINE.ymax - 1), slice(NEATLINE.xmin + 2, NEATLINE.xmax - 1))
    grid[inner] = 0
    qal = Image.new("L", (SIZE, SIZE), 0)
    ImageDraw.Draw(qal).polygon([(202, 1400), (600, 1250), (1000, 1330), (1400, 1200), (1798, 1260),
                                 (1798, 1420), (1400, 1380), (1000, 1500), (600, 1430), (202, 1560)], fill=1)
    oj = Image.new("L", (SIZE, SIZE), 0)
    d = ImageDraw.Draw(oj)
    d.ellipse([500, 450, 1250, 1050], fill=1)
    d.ellipse([750, 650, 950, 820], fill=0)  # Om inlier: a hole in Oj
    q, o = np.asarray(qal).astype(bool), np.asarray(oj).astype(bool)
    inside = grid == 0
    grid[inside & o] = 2
    grid[inside & q] = 1
    return grid


def _symbol_mask(cls: str) -> np.ndarray:
    return {t.cls: t.mask for t in default_templates()}[cls]


@dataclass
class Fixture:
    raster: RasterMap
    unit_grid: np.ndarray
    point_boxes: list[tuple[str, PixelBBox]]


def render_map() -> Fixture:
    grid = _unit_grid()
    px = np.full((SIZE, SIZE, 3), 255, dtype=np.uint8)
    for k, (_, color, _) in enumerate(UNITS):
        px[grid == k] = color
    im = Image.fromarray(px)
    draw = ImageDraw.Draw(im)
    for line in FAULTS:
        draw.line(line, fill=FAULT_COLOR, width=3)
    # legend
    items = _legend_items()
    for it in items:
        b = it.swatch_bbox
        if it.kind is FeatureKind.POLYGON:
            color = dict((u[0], u[1]) for u in UNITS)[it.label]
            draw.rectangle([b.xmin, b.ymin, b.xmax - 1, b.ymax - 1], fill=color)
        elif it.kind is FeatureKind.LINE:
            cy = (b.ymin + b.ymax) // 2
            draw.line([(b.xmin + 5, cy), (b.xmax - 5, cy)], fill=FAULT_COLOR, width=3)
        draw.text((it.description_bbox.xmin, it.description_bbox.ymin + 10), it.description_text, fill=INK)
    # labels and title
    for lab in coordinate_labels():
        draw.text((lab["x"] - 30, lab["y"] - 5), lab["text"], fill=INK)
    draw.text((TITLE_BOX.xmin, TITLE_BOX.ymin + 10), TITLE, fill=INK)
    px = np.array(im)
    # point symbols in the map and in the legend
    boxes = []
    for cls, (cx, cy) in POINTS:
        m = _symbol_mask(cls)
        h, w = m.shape
        x0, y0 = cx - w // 2, cy - h // 2
        px[y0:y0 + h, x0:x0 + w][m] = INK
        boxes.append((cls, PixelBBox(x0, y0, x0 + w, y0 + h)))
    for it in items:
        if it.kind is FeatureKind.POINT:
            m = _symbol_mask(it.label)
            x0, y0 = int(it.swatch_bbox.xmin) + 20, int(it.swatch_bbox.ymin) + 10
            px[y0:y0 + m.shape[0], x0:x0 + m.shape[1]][m] = INK
    # neatline with short ticks beyond each corner
    t = 30
    for x in (NEATLINE.xmin, NEATLINE.xmax):
        px[NEATLINE.ymin - t:NEATLINE.ymax + t + 1, x - 1:x + 2] = INK
    for y in (NEATLINE.ymin, NEATLINE.ymax):
        px[y - 1:y + 2, NEATLINE.xmin - t:NEATLINE.xmax + t + 1] = INK
    return Fixture(RasterMap(MAP_ID, px), grid, boxes)


def raw_line_graphs(seed: int = 7) -> list[LineGraph]:
    """Noisy, broken versions of the fault traces: nodes every ~10 px with
    small perpendicular jitter and one 4-px gap per trace."""
    rng = np.random.default_rng(seed)
    graphs = []
    for line in FAULTS:
        pts = np.array(line, dtype=float)
        dense = [pts[0]]
        for a, b in zip(pts[:-1], pts[1:]):
            n = max(1, int(math.ceil(np.hypot(*(b - a)) / 10)))
            for k in range(1, n + 1):
                dense.append(a + (b - a) * k / n)
        dense = np.array(dense)
        jitter = rng.uniform(-1.5, 1.5, size=dense.shape)
        jitter[0] = jitter[-1] = 0
        dense = dense + jitter
        cut = len(dense) // 2
        # split into two pieces separated by a short gap
        first, second = dense[:cut], dense[cut:]
        second = second.copy()
        direction = second[0] - first[-1]
        second[0] = first[-1] + direction / np.linalg.norm(direction) * 4.0
        nodes = [PixelPoint(float(x), float(y)) for x, y in np.vstack([first, second])]
        edges = [(i, i + 1) for i in range(len(first) - 1)]
        edges += [(i, i + 1) for i in range(len(first), len(nodes) - 1)]
        graphs.append(LineGraph(nodes, edges, "fault"))
    return graphs


def truth_polygons(grid: np.ndarray):
    from .extract.color import LabelMask
    from .extract.polygons import vectorize_mask

    mask = np.where(grid == 255, -1, grid.astype(np.int32))
    return vectorize_mask(LabelMask(mask, tuple(u[0] for u in UNITS)))


def _line_features() -> list[LineGraph]:
    out = []
    for line in FAULTS:
        nodes = [PixelPoint(float(x), float(y)) for x, y in line]
        out.append(LineGraph(nodes, [(i, i + 1) for i in range(len(nodes) - 1)], "fault"))
    return out


def _planted_matches(n: int = 40, seed: int = 11) -> dict:
    """Query content pixel -> Nazareth topo raster pixel: shift by the
    neatline origin and scale by 1/2."""
    rng = np.random.default_rng(seed)
    qs = rng.uniform([NEATLINE.xmin, NEATLINE.ymin], [NEATLINE.xmax, NEATLINE.ymax], size=(n, 2))
    out = []
    for qx, qy in qs:
        out.append({"qx": float(qx), "qy": float(qy), "cx": (qx - NEATLINE.xmin) / 2,
                    "cy": (qy - NEATLINE.ymin) / 2, "confidence": 0.9})
    for k in range(8):
        out.append({"qx": float(rng.uniform(0, SIZE)), "qy": float(rng.uniform(0, SIZE)),
                    "cx": float(rng.uniform(0, 800)), "cy": float(rng.uniform(0, 900)), "confidence": 0.6})
    return {"matches": out}


def _features_doc(features: VectorFeatureSet) -> dict:
    from .io import features_to_geojson

    doc = features_to_geojson(features)
    doc["raster_size"] = [SIZE, SIZE]
    return doc


def default_job() -> dict:
    return {
        "schema_version": 1,
        "name": "fixture",
        "tasks": [
            {"id": "layout", "module": "layout", "params": {"map": "map.png"}},
            {"id": "crop", "module": "crop", "deps": ["layout"], "params": {"map": "map.png", "patch_size": 1000, "stride": 800}},
            {"id": "georef", "module": "georef", "deps": ["layout"], "params": {"map": "map.png", "mode": "text"}},
            {"id": "polygons", "module": "extract_polygons", "deps": ["layout", "georef"], "params": {"map": "map.png"}},
            {"id": "lines", "module": "extract_lines", "deps": ["georef"], "params": {"raw_lines": "raw_lines.json"}},
            {"id": "points", "module": "extract_points", "deps": ["crop", "georef"], "params": {"map": "map.png"}},
            {"id": "eval", "module": "evaluate", "deps": ["layout", "georef", "polygons", "lines", "points"],
             "params": {"truth": "truth"}},
        ],
    }


def default_config() -> dict:
    return {
        "schema_version": 1,
        "paths": {"output_dir": "artifacts", "topo_index": "topo_index.csv", "topo_rasters": "topo"},
        "clients": {"model": "stub:stub", "matcher": "stub:matcher", "detector": "stub:detector"},
        "params": {},
        "workers": 1,
        "seed": 0,
    }


def write_fixture(out_dir) -> Path:
    """Write the full fixture tree under ``out_dir`` and return it."""
    root = Path(out_dir)
    for sub in ("stub", "detector", "matcher", "topo", "truth"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    fx = render_map()
    Image.fromarray(fx.raster.pixels).save(root / "map.png")

    # model stub responses
    from .io import layout_to_dict

    write_json(layout_to_dict(stub_layout()), root / "stub" / "layout.json")
    write_json(coordinate_labels(), root / "stub" / "coordinate_labels.json")
    (root / "stub" / "title.txt").write_text(TITLE + "\n", encoding="utf-8")
    (root / "stub" / "toponyms.txt").write_text("Nazareth\nNorthampton\nPennsylvania\n", encoding="utf-8")
    write_json({"global": [{"class": c, "bbox": [b.xmin, b.ymin, b.xmax, b.ymax], "confidence": 0.9}
                           for c, b in fx.point_boxes]}, root / "detector" / "detections.json")
    write_json(_planted_matches(), root / "matcher" / "nazareth.json")
    topo_px = np.full((TOPO_RASTER[1], TOPO_RASTER[0], 3), 235, dtype=np.uint8)
    Image.fromarray(topo_px).save(root / "topo" / "nazareth.png")
    rows = ["id,quadrangle_name,state,county,min_lon,min_lat,max_lon,max_lat,scale"]
    for rid, name, state, county, b in TOPO:
        rows.append(f"{rid},{name},{state},{county},{b.min_lon},{b.min_lat},{b.max_lon},{b.max_lat},24000")
    (root / "topo_index.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    raw = VectorFeatureSet(lines=tuple(raw_line_graphs()))
    write_json(_features_doc(raw), root / "raw_lines.json")

    # truth
    save_gcps(truth_gcps(), root / "truth" / "gcps.json")
    save_layout(truth_layout(), root / "truth" / "layout.json")
    write_json(_features_doc(VectorFeatureSet(polygons=tuple(truth_polygons(fx.unit_grid)))),
               root / "truth" / "polygons.geojson")
    write_json(_features_doc(VectorFeatureSet(lines=tuple(_line_features()))), root / "truth" / "lines.geojson")
    pts = [PointFeature(c, b.center, 1.0) for c, b in fx.point_boxes]
    write_json(_features_doc(VectorFeatureSet(points=tuple(pts))), root / "truth" / "points.geojson")

    (root / "job.yaml").write_text(yaml.safe_dump(default_job(), sort_keys=False), encoding="utf-8")
    (root / "config.yaml").write_text(yaml.safe_dump(default_config(), sort_keys=False), encoding="utf-8")
    return root
