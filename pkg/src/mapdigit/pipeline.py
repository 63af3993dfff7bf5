"""Pipeline steps shared by the orchestrator task modules and the CLI:
georeferencing with fallback, and file-level evaluation."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from . import evaluation as ev
from .errors import ClientError, GatingRejectedError, ValidationError
from .extract.polygons import polygon_mask
from .geometry import PixelBBox, PixelPoint, fit_homography
from .georef.corners import DEFAULT_WINDOW, CornerId, refine_corners
from .georef.text import georeference_text, labels_from_records, read_coordinate_labels
from .georef.topo import extract_toponyms, load_topo_index, retrieve_topo_candidates, toponyms_via_client
from .georef.text import extract_title
from .georef.visual import DEFAULT_BUFFER_KM, RansacParams, georeference_visual, select_candidates
from .io import load_features_geojson, load_gcps, load_layout, load_raster, read_json
from .model import GcpSet, MapLayout, RasterMap

logger = logging.getLogger(__name__)

GEOREF_MODES = ("text", "visual", "auto")


# --- georeferencing --------------------------------------------------------------

def _text_path(raster: RasterMap, layout: MapLayout, client, labels, window: int):
    if labels is None:
        if client is None:
            return None, {"accepted": False, "reason": "no-model-client"}
        labels = read_coordinate_labels(raster, client)
    result = georeference_text(raster, layout, labels, window)
    return result.gcps, result.report()


def _visual_path(raster: RasterMap, layout: MapLayout, config, window: int, buffer_km: float,
                 ransac: RansacParams):
    report: dict = {"method": "visual"}
    client, matcher = config.client("model"), config.client("matcher")
    if client is None or matcher is None or config.topo_index is None:
        report["reason"] = "visual path needs a model client, a matcher and a topo index"
        return None, report
    title = extract_title(raster, client)
    try:
        toponyms = toponyms_via_client(title, client)
    except ClientError as exc:
        logger.info("toponym client failed (%s); using the rule-based extractor", exc)
        toponyms = []
    toponyms = toponyms or extract_toponyms(title)
    report.update(title=title, toponyms=toponyms)
    index = load_topo_index(config.topo_index)
    ranked = retrieve_topo_candidates(toponyms, index)
    report["retrieved"] = [[r.id, round(s, 6)] for r, s in ranked]
    if not ranked:
        report["reason"] = "no topographic candidates"
        return None, report
    nearby = select_candidates(ranked[0][0].bbox, index, buffer_km)
    order = [r for r, _ in ranked] + sorted((r for r in nearby if r.id not in {x.id for x, _ in ranked}),
                                            key=lambda r: r.id)
    rasters = {}
    if config.topo_rasters is not None:
        for rec in order:
            p = Path(config.topo_rasters) / f"{rec.id}.png"
            if p.exists():
                rasters[rec.id] = load_raster(p, rec.id)
    report["candidates"] = [r.id for r in order]
    corners = {c.corner_id: c.point for c in refine_corners(raster, layout.content_bbox, window)}
    box = PixelBBox(corners[CornerId.NW].x, corners[CornerId.NW].y, corners[CornerId.SE].x, corners[CornerId.SE].y)
    gcps = georeference_visual(raster, order, matcher, rasters, ransac, content_bbox=box,
                               workers=config.workers)
    if gcps is None:
        report["reason"] = "no candidate passed the confidence and inlier gates"
    else:
        report.update(gcps.metadata)
    return gcps, report


def run_georef(raster: RasterMap, layout: MapLayout, config, mode: str = "auto", labels=None,
               window: int = DEFAULT_WINDOW, buffer_km: float = DEFAULT_BUFFER_KM,
               ransac: Optional[RansacParams] = None) -> tuple[Optional[GcpSet], dict]:
    """Georeference by corner labels, by retrieval plus keypoint matching, or
    (``auto``) labels first with the visual path as fallback.

    ``labels`` are ``{text, x, y[, axis]}`` records replacing the model's
    label reading.  Returns (GCPs or None, report)."""
    if mode not in GEOREF_MODES:
        raise ValidationError(f"georef mode must be one of {GEOREF_MODES}")
    ransac = ransac or RansacParams(seed=config.seed)
    label_objs = labels_from_records(labels) if labels is not None else None
    report: dict = {"mode": mode}
    gcps = None
    if mode in ("text", "auto"):
        gcps, report["text"] = _text_path(raster, layout, config.client("model"), label_objs, window)
    if gcps is None and mode in ("visual", "auto"):
        gcps, report["visual"] = _visual_path(raster, layout, config, window, buffer_km, ransac)
    report["method"] = None if gcps is None else gcps.metadata.get("method")
    if gcps is not None:
        gcps.metadata.setdefault("raster_size", [raster.width, raster.height])
    return gcps, report


def require_gcps(gcps: Optional[GcpSet], report: dict) -> GcpSet:
    if gcps is None:
        raise GatingRejectedError("georeferencing rejected by every path: "
                                  + "; ".join(f"{k}: {v.get('reason')}" for k, v in report.items()
                                              if isinstance(v, dict)))
    return gcps


# --- file-level evaluation -------------------------------------------------------

def raster_size(doc: dict, features) -> tuple[int, int]:
    """(width, height) from a ``raster_size`` member or the feature extent."""
    if "raster_size" in doc:
        w, h = doc["raster_size"]
        return int(w), int(h)
    xs, ys = [0.0], [0.0]
    for p in features.polygons:
        xs += [q.x for q in p.outer]
        ys += [q.y for q in p.outer]
    for g in features.lines:
        xs += [q.x for q in g.nodes]
        ys += [q.y for q in g.nodes]
    for p in features.points:
        xs.append(p.point.x)
        ys.append(p.point.y)
    return int(math.ceil(max(xs))) + 1, int(math.ceil(max(ys))) + 1


def _features(path):
    return load_features_geojson(path), read_json(path)


def polygon_metrics(pred_path, gt_path) -> dict:
    """Per-label pixel and instance metrics plus an iou_count-weighted map
    aggregate."""
    pred, pdoc = _features(pred_path)
    gt, gdoc = _features(gt_path)
    w, h = raster_size(gdoc, gt)
    labels = sorted({p.label for p in gt.polygons} | {p.label for p in pred.polygons})
    per_label = {}
    for lab in labels:
        pm = [polygon_mask(p, h, w) for p in pred.polygons if p.label == lab]
        gm = [polygon_mask(p, h, w) for p in gt.polygons if p.label == lab]
        union_p = np.logical_or.reduce(pm) if pm else np.zeros((h, w), bool)
        union_g = np.logical_or.reduce(gm) if gm else np.zeros((h, w), bool)
        block = ev.pixel_iou_f1(union_p, union_g).to_dict()
        if gm:
            block.update(ev.instance_ratios(pm, gm).to_dict())
        else:
            block.update({"cand_ratio": 0.0, "ex_gt_ratio": 0.0, "iou_count": len(pm)})
        per_label[lab] = block
    items = list(per_label.values())
    agg = ev.weighted_aggregate(items, [b["iou_count"] for b in items]) if items else {}
    agg["iou_count"] = sum(b["iou_count"] for b in items)
    return {"labels": per_label, **agg}


def line_metrics(pred_path, gt_path, buffer_px: float = ev.DEFAULT_LINE_BUFFER_PX) -> dict:
    pred, _ = _features(pred_path)
    gt, _ = _features(gt_path)
    return ev.line_correct_complete(list(pred.lines), list(gt.lines), buffer_px).to_dict()


def point_metrics(pred_path, gt_path) -> dict:
    pred, _ = _features(pred_path)
    gt, gdoc = _features(gt_path)
    w, h = raster_size(gdoc, gt)
    labels = sorted({p.label for p in gt.points} | {p.label for p in pred.points})
    diag = math.hypot(w, h)
    per_label = {lab: ev.point_prf([p.point for p in pred.points if p.label == lab],
                                   [p.point for p in gt.points if p.label == lab], diag).to_dict()
                 for lab in labels}
    overall = ev.point_prf([p.point for p in pred.points], [p.point for p in gt.points], diag).to_dict()
    return {"labels": per_label, "buffer_px": ev.point_buffer(diag), **overall}


def _homography(g: GcpSet):
    if g.homography is not None:
        return g.homography
    if len(g.gcps) < 4:
        raise ValidationError(f"{g.map_id}: need a homography or at least 4 GCPs")
    return fit_homography([(p.pixel, PixelPoint(p.geo.lon, p.geo.lat)) for p in g.gcps])


def georef_metrics(pred: GcpSet, gt: GcpSet) -> dict:
    """Errors of the predicted transform at the ground-truth GCPs."""
    size = gt.metadata.get("raster_size") or pred.metadata.get("raster_size")
    if size is None:
        xs = [g.pixel.x for g in gt.gcps]
        ys = [g.pixel.y for g in gt.gcps]
        size = (max(xs) - min(xs), max(ys) - min(ys))
        logger.warning("%s: no raster size recorded; using the GCP extent as the diagonal", gt.map_id)
    diag = math.hypot(*size)
    m = ev.evaluate_georef(_homography(pred), [g.pixel for g in gt.gcps], [g.geo for g in gt.gcps], diag)
    return m.to_dict()


def layout_metrics(pred: MapLayout, gt: MapLayout) -> dict:
    return ev.evaluate_layout(pred, gt)


EVAL_KINDS = {
    "polygon": (".geojson", polygon_metrics),
    "line": (".geojson", line_metrics),
    "point": (".geojson", point_metrics),
    "georef": (".json", lambda p, g: georef_metrics(load_gcps(p), load_gcps(g))),
    "layout": (".json", lambda p, g: layout_metrics(load_layout(p), load_layout(g))),
}


def pair_files(pred_dir, gt_dir, suffix: str) -> tuple[list[str], list[str], list[str]]:
    """(paired stems, stems only in pred, stems only in gt)."""
    p = {f.name[: -len(suffix)] for f in Path(pred_dir).glob(f"*{suffix}")}
    g = {f.name[: -len(suffix)] for f in Path(gt_dir).glob(f"*{suffix}")}
    return sorted(p & g), sorted(p - g), sorted(g - p)


def evaluate_dirs(pred_dir, gt_dir, kind: str) -> dict:
    """Report with one block per paired file and an aggregate block.
    Raises ValidationError listing unpaired files."""
    if kind not in EVAL_KINDS:
        raise ValidationError(f"evaluation kind must be one of {sorted(EVAL_KINDS)}")
    suffix, fn = EVAL_KINDS[kind]
    paired, only_pred, only_gt = pair_files(pred_dir, gt_dir, suffix)
    if only_pred or only_gt or not paired:
        raise ValidationError(f"unpaired files: prediction only {only_pred}, ground truth only {only_gt}"
                              + ("" if paired else "; no pairs found"))
    per_map = {}
    for stem in paired:
        per_map[stem] = fn(Path(pred_dir) / f"{stem}{suffix}", Path(gt_dir) / f"{stem}{suffix}")
    if kind == "georef":
        for block in per_map.values():
            block.pop("category", None)
        doc = ev.aggregate_report(per_map)
        for stem, block in doc["maps"].items():
            block["category"] = ev.categorize_georef(block["rmse_geo"]).value
        if doc["aggregate"]:
            doc["aggregate"]["category"] = ev.categorize_georef(doc["aggregate"]["rmse_geo"]).value
        doc["kind"] = kind
        return doc
    doc = ev.aggregate_report(per_map)
    doc["kind"] = kind
    return doc

