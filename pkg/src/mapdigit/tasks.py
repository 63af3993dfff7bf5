"""Task modules registered with the default orchestrator registry.

Each module reads its params (paths relative to the job file), consumes the
results of its dependencies and writes artifacts into ``ctx.out_dir``.  The
shared dict carries ``config`` (a PipelineConfig) and a raster cache.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path

from .cropper import PatchGrid, crop
from .errors import ValidationError
from .extract.color import DEFAULT_MAX_DISTANCE, extract_polygons_by_color, swatch_signature
from .extract.lines import refine_line_graph
from .extract.points import POINT_CATALOG, detect_points
from .extract.polygons import vectorize_mask
from .geometry import PixelPoint
from .io import (
    features_to_geojson,
    load_features_geojson,
    load_gcps,
    load_layout,
    load_raster,
    read_json,
    save_gcps,
    save_layout,
    save_raster,
    write_json,
)
from .layout import segment_layout
from .model import FeatureKind, PointFeature, PolygonFeature, VectorFeatureSet
from .orchestrator import default_registry
from .pipeline import (
    line_metrics,
    point_metrics,
    polygon_metrics,
    georef_metrics,
    layout_metrics,
    require_gcps,
    run_georef,
)

logger = logging.getLogger(__name__)
_raster_lock = threading.Lock()


def _config(ctx):
    cfg = ctx.shared.get("config")
    if cfg is None:
        from .config import PipelineConfig

        cfg = ctx.shared.setdefault("config", PipelineConfig())
    return cfg


def _path(ctx, p) -> Path:
    base = Path(ctx.shared.get("job_dir", _config(ctx).base_dir))
    p = Path(p)
    return p if p.is_absolute() else base / p


def _raster(ctx, key: str = "map"):
    if key not in ctx.params:
        raise ValidationError(f"task {ctx.task.id}: missing param {key!r}")
    path = _path(ctx, ctx.params[key])
    with _raster_lock:
        cache = ctx.shared.setdefault("rasters", {})
        if str(path) not in cache:
            cache[str(path)] = load_raster(path)
        return cache[str(path)]


def _dep(ctx, key: str):
    """First dependency result carrying ``key``."""
    for result in ctx.inputs.values():
        if isinstance(result, dict) and key in result:
            return result[key]
    raise ValidationError(f"task {ctx.task.id}: no dependency provides {key!r}")


def _optional_dep(ctx, key: str):
    try:
        return _dep(ctx, key)
    except ValidationError:
        return None


def _write_features(features: VectorFeatureSet, path: Path, size, gcps=None) -> None:
    doc = features_to_geojson(features)
    doc["raster_size"] = list(size)
    write_json(doc, path)
    if gcps is not None:
        write_json(features_to_geojson(features, gcps), path.with_name(path.stem + ".geo.geojson"))


@default_registry.register("layout")
def layout_task(ctx):
    raster = _raster(ctx)
    use_client = ctx.params.get("use_client", True)
    client = _config(ctx).client("model") if use_client else None
    layout = segment_layout(raster, client)
    problems = layout.check_bounds(raster)
    for p in problems:
        logger.warning("layout: %s", p)
    out = ctx.out_dir / "layout.json"
    save_layout(layout, out)
    return {"layout": str(out), "map": str(_path(ctx, ctx.params["map"])), "problems": problems}


@default_registry.register("crop")
def crop_task(ctx):
    raster = _raster(ctx)
    grid = PatchGrid(int(ctx.params.get("patch_size", 1000)), ctx.params.get("stride"))
    patches = crop(raster, grid)
    index = [{"i": i, "x": p.origin.x, "y": p.origin.y, "valid": list(p.valid.as_tuple())}
             for i, p in enumerate(patches)]
    if ctx.params.get("write_images", False):
        for i, p in enumerate(patches):
            save_raster(p.image, ctx.out_dir / f"patch_{i:04d}.png")
    write_json({"patch_size": grid.patch_size, "stride": grid.stride, "patches": index},
               ctx.out_dir / "patches.json")
    return {"grid": {"patch_size": grid.patch_size, "stride": grid.stride}, "patches": len(patches)}


@default_registry.register("georef")
def georef_task(ctx):
    raster = _raster(ctx)
    layout = load_layout(_dep(ctx, "layout"))
    labels = ctx.params.get("labels")
    records = read_json(_path(ctx, labels)) if labels else None
    gcps, report = run_georef(raster, layout, _config(ctx), ctx.params.get("mode", "auto"), records,
                              int(ctx.params.get("window", 1000)), float(ctx.params.get("buffer_km", 10.0)))
    write_json(report, ctx.out_dir / "georef_report.json")
    gcps = require_gcps(gcps, report)
    out = ctx.out_dir / "gcps.json"
    save_gcps(gcps, out)
    return {"gcps": str(out), "method": report["method"]}


def _translate(poly: PolygonFeature, dx: float, dy: float) -> PolygonFeature:
    move = lambda ring: tuple(PixelPoint(p.x + dx, p.y + dy) for p in ring)
    return PolygonFeature(poly.label, move(poly.outer), tuple(move(h) for h in poly.holes), poly.confidence)


@default_registry.register("extract_polygons")
def polygons_task(ctx):
    raster = _raster(ctx)
    layout = load_layout(_dep(ctx, "layout"))
    items = [it for it in layout.items if it.kind is FeatureKind.POLYGON]
    if not items:
        raise ValidationError("layout has no polygon legend items")
    sigs = [swatch_signature(raster, it) for it in items]
    box = layout.content_bbox.clip(raster.bounds)
    content = raster.crop(box)
    mask = extract_polygons_by_color(content, sigs, float(ctx.params.get("max_distance", DEFAULT_MAX_DISTANCE)))
    min_area = float(ctx.params.get("min_area", 0))
    dx, dy = int(box.xmin), int(box.ymin)
    polys = [_translate(p, dx, dy) for p in vectorize_mask(mask) if p.area >= min_area]
    gcps_path = _optional_dep(ctx, "gcps")
    gcps = load_gcps(gcps_path) if gcps_path else None
    out = ctx.out_dir / "polygons.geojson"
    _write_features(VectorFeatureSet(polygons=polys), out, (raster.width, raster.height), gcps)
    return {"polygons": str(out), "count": len(polys)}


@default_registry.register("extract_lines")
def lines_task(ctx):
    raw_path = _path(ctx, ctx.params["raw_lines"])
    raw = load_features_geojson(raw_path)
    size = read_json(raw_path).get("raster_size", [0, 0])
    refined = [refine_line_graph(g, float(ctx.params.get("gap_tolerance_px", 5.0)),
                                 int(ctx.params.get("smoothing_window", 3))) for g in raw.lines]
    gcps_path = _optional_dep(ctx, "gcps")
    gcps = load_gcps(gcps_path) if gcps_path else None
    out = ctx.out_dir / "lines.geojson"
    _write_features(VectorFeatureSet(lines=refined), out, size, gcps)
    return {"lines": str(out), "count": len(refined)}


@default_registry.register("extract_points")
def points_task(ctx):
    raster = _raster(ctx)
    grid_doc = _optional_dep(ctx, "grid") or {}
    grid = PatchGrid(int(ctx.params.get("patch_size", grid_doc.get("patch_size", 1000))),
                     ctx.params.get("stride", grid_doc.get("stride")))
    detector = _config(ctx).client("detector")
    if detector is None:
        raise ValidationError("no detector client configured")
    catalog = ctx.params.get("catalog", POINT_CATALOG)
    dets = detect_points(raster, grid, detector, catalog, float(ctx.params.get("iou_threshold", 0.5)),
                         _config(ctx).workers)
    pts = [PointFeature(d.cls, d.bbox.center, d.confidence) for d in dets]
    gcps_path = _optional_dep(ctx, "gcps")
    gcps = load_gcps(gcps_path) if gcps_path else None
    out = ctx.out_dir / "points.geojson"
    _write_features(VectorFeatureSet(points=pts), out, (raster.width, raster.height), gcps)
    return {"points": str(out), "count": len(pts)}


@default_registry.register("evaluate")
def evaluate_task(ctx):
    """Compare whatever upstream artifacts exist against ``truth/``."""
    truth = _path(ctx, ctx.params["truth"])
    report = {}
    checks = (
        ("polygons", "polygons.geojson", polygon_metrics),
        ("lines", "lines.geojson", line_metrics),
        ("points", "points.geojson", point_metrics),
    )
    for key, name, fn in checks:
        pred = _optional_dep(ctx, key)
        if pred and (truth / name).exists():
            report[key] = fn(pred, truth / name)
    gcps = _optional_dep(ctx, "gcps")
    if gcps and (truth / "gcps.json").exists():
        report["georef"] = georef_metrics(load_gcps(gcps), load_gcps(truth / "gcps.json"))
    layout = _optional_dep(ctx, "layout")
    if layout and (truth / "layout.json").exists():
        report["layout"] = layout_metrics(load_layout(layout), load_layout(truth / "layout.json"))
    out = ctx.out_dir / "report.json"
    write_json(report, out)
    summary = {k: {m: v for m, v in block.items() if not isinstance(v, dict)} for k, block in report.items()}
    return {"report": str(out), "summary": summary}
