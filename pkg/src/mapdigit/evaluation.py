"""Evaluation metrics for layout, polygons, lines, points and georeferencing.

Conventions: when both prediction and ground truth are empty the scores are
1 (perfect agreement); otherwise a zero denominator gives 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .geometry import GeoPoint, PixelBBox, PixelPoint, box_iou, geodesic_distance
from .model import LineGraph, MapLayout, PolygonFeature

logger = logging.getLogger(__name__)

DEFAULT_LINE_BUFFER_PX = 5.0
POINT_BUFFER_FRACTION = 2e-4
EXCELLENT_KM = 0.1
GOOD_KM = 1.0


@dataclass(frozen=True)
class PixelMetrics:
    iou: float
    f1: float
    precision: float
    recall: float

    def to_dict(self) -> dict:
        return asdict(self)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _prf(tp: int, n_pred: int, n_gt: int, iou: float) -> PixelMetrics:
    if n_pred == 0 and n_gt == 0:
        return PixelMetrics(1.0, 1.0, 1.0, 1.0)
    p, r = _ratio(tp, n_pred), _ratio(tp, n_gt)
    return PixelMetrics(iou, _f1(p, r), p, r)


def _binary(m, label: Optional[int] = None) -> np.ndarray:
    a = np.asarray(getattr(m, "mask", m))
    if label is not None:
        return a == label
    if a.dtype == bool:
        return a
    return a >= 0 if a.min(initial=0) < 0 else a > 0


def pixel_iou_f1(pred, gt, label: Optional[int] = None) -> PixelMetrics:
    """Pixel-set IoU, precision, recall and F1.  Masks are boolean arrays or
    label masks (``label`` selects one legend index, else any label)."""
    p, g = _binary(pred, label), _binary(gt, label)
    if p.shape != g.shape:
        raise ValidationError(f"mask shapes differ: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    n_p, n_g = int(np.count_nonzero(p)), int(np.count_nonzero(g))
    union = n_p + n_g - tp
    if union == 0:
        return PixelMetrics(1.0, 1.0, 1.0, 1.0)
    return _prf(tp, n_p, n_g, tp / union)


# --- detection ---------------------------------------------------------------

def _box_conf(d) -> tuple[PixelBBox, float]:
    if isinstance(d, PixelBBox):
        return d, 1.0
    if isinstance(d, tuple):
        if len(d) == 2 and isinstance(d[0], PixelBBox):
            return d[0], float(d[1])
        return PixelBBox(*d[:4]), 1.0
    return d.bbox, float(getattr(d, "confidence", 1.0))


def match_boxes(pred: Sequence, gt: Sequence, iou_threshold: float = 0.5,
                optimal: bool = False) -> list[tuple[int, int, float]]:
    """One-to-one (pred index, gt index, IoU) matches at or above the threshold.

    Greedy: preds in descending confidence (input order on ties) each take
    the unmatched gt of highest IoU.  ``optimal`` maximizes the match count."""
    pb = [_box_conf(d) for d in pred]
    gb = [_box_conf(d)[0] for d in gt]
    if not pb or not gb:
        return []
    ious = np.array([[box_iou(b, g) for g in gb] for b, _ in pb])
    if optimal:
        ok = ious >= iou_threshold
        rows, cols = linear_sum_assignment(-(ok.astype(float) + 1e-9 * ious))
        return [(int(r), int(c), float(ious[r, c])) for r, c in zip(rows, cols) if ok[r, c]]
    order = sorted(range(len(pb)), key=lambda i: -pb[i][1])
    taken = np.zeros(len(gb), dtype=bool)
    out = []
    for i in order:
        cand = np.where(taken, -1.0, ious[i])
        j = int(np.argmax(cand))
        if cand[j] >= iou_threshold:
            taken[j] = True
            out.append((i, j, float(ious[i, j])))
    return out


def detection_f1(pred: Sequence, gt: Sequence, iou_threshold: float = 0.5, optimal: bool = False) -> PixelMetrics:
    """Box-detection precision/recall/F1; ``iou`` is the mean IoU of matches."""
    m = match_boxes(pred, gt, iou_threshold, optimal)
    mean_iou = float(np.mean([x[2] for x in m])) if m else 0.0
    return _prf(len(m), len(pred), len(gt), mean_iou)


# --- polygons ----------------------------------------------------------------

@dataclass(frozen=True)
class InstanceMetrics:
    cand_ratio: float
    ex_gt_ratio: float
    iou_count: int

    def to_dict(self) -> dict:
        return asdict(self)


def _masks(items, shape) -> list[np.ndarray]:
    from .extract.polygons import polygon_mask

    out = []
    for it in items:
        if isinstance(it, PolygonFeature):
            if shape is None:
                raise ValidationError("a raster shape is needed to compare polygon features")
            out.append(polygon_mask(it, *shape))
        else:
            out.append(np.asarray(it, dtype=bool))
    return out


def _extent(m: np.ndarray):
    rows, cols = np.any(m, axis=1), np.any(m, axis=0)
    if not rows.any():
        return None
    r, c = np.nonzero(rows)[0], np.nonzero(cols)[0]
    return r[0], r[-1] + 1, c[0], c[-1] + 1


def _intersections(pred, gt) -> np.ndarray:
    """(n_gt, n_pred) boolean: positive-area intersection."""
    out = np.zeros((len(gt), len(pred)), dtype=bool)
    pe = [_extent(p) for p in pred]
    for i, g in enumerate(gt):
        ge = _extent(g)
        if ge is None:
            continue
        for j, p in enumerate(pred):
            e = pe[j]
            if e is None:
                continue
            r0, r1 = max(ge[0], e[0]), min(ge[1], e[1])
            c0, c1 = max(ge[2], e[2]), min(ge[3], e[3])
            if r0 < r1 and c0 < c1:
                out[i, j] = bool(np.any(g[r0:r1, c0:c1] & p[r0:r1, c0:c1]))
    return out


def iou_count(pred_polys, gt_polys, shape: Optional[tuple[int, int]] = None) -> int:
    """Intersecting (pred, gt) pairs plus gt polygons not fully covered by
    the union of predictions."""
    pred, gt = _masks(pred_polys, shape), _masks(gt_polys, shape)
    pairs = int(_intersections(pred, gt).sum())
    covered = np.zeros_like(gt[0]) if gt else None
    for p in pred:
        covered = covered | p
    uncovered = sum(1 for g in gt if np.any(g & ~covered))
    return pairs + uncovered


def instance_ratios(pred_polys, gt_polys, shape: Optional[tuple[int, int]] = None) -> InstanceMetrics:
    """cand_ratio: mean number of intersecting predictions per gt polygon;
    ex_gt_ratio: prediction count over gt count."""
    pred, gt = _masks(pred_polys, shape), _masks(gt_polys, shape)
    if not gt:
        raise ValidationError("instance ratios need at least one ground-truth polygon")
    inter = _intersections(pred, gt)
    cand = float(inter.sum(axis=1).mean())
    return InstanceMetrics(cand, len(pred) / len(gt), iou_count(pred, gt))


def weighted_aggregate(items: Sequence[dict], weights: Sequence[float]) -> dict:
    """Per-metric weighted mean; falls back to the plain mean (with a
    warning) when all weights are zero."""
    if len(items) != len(weights):
        raise ValidationError("one weight per item is required")
    if not items:
        return {}
    w = np.asarray(weights, dtype=float)
    if w.sum() == 0:
        logger.warning("all aggregation weights are zero; using the unweighted mean")
        w = np.ones_like(w)
    keys = [k for k in items[0] if isinstance(items[0][k], (int, float))]
    return {k: math.fsum(wi * float(it[k]) for wi, it in zip(w, items)) / math.fsum(w) for k in keys}


# --- lines -------------------------------------------------------------------

@dataclass(frozen=True)
class LineMetrics:
    correctness: float
    completeness: float
    buffer_px: float

    def to_dict(self) -> dict:
        return asdict(self)


def _segments(lines) -> np.ndarray:
    segs = []
    for ln in lines:
        if isinstance(ln, LineGraph):
            xy = ln.coords()
            segs += [(*xy[a], *xy[b]) for a, b in ln.edges]
        else:
            pts = [tuple(p)[:2] for p in ln]
            segs += [(*a, *b) for a, b in zip(pts[:-1], pts[1:])]
    return np.array(segs, dtype=float).reshape(-1, 4)


def densify(segs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split segments into pieces of at most 1 px: (midpoints, lengths)."""
    mids, lens = [], []
    for x0, y0, x1, y1 in segs:
        L = math.hypot(x1 - x0, y1 - y0)
        if L == 0:
            continue
        n = max(1, math.ceil(L))
        t = (np.arange(n) + 0.5) / n
        mids.append(np.column_stack([x0 + t * (x1 - x0), y0 + t * (y1 - y0)]))
        lens.append(np.full(n, L / n))
    if not mids:
        return np.zeros((0, 2)), np.zeros(0)
    return np.concatenate(mids), np.concatenate(lens)


def point_segment_distance(pts: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest segment: (n,)."""
    if len(segs) == 0:
        return np.full(len(pts), np.inf)
    a, b = segs[:, :2], segs[:, 2:]
    ab = b - a
    denom = (ab ** 2).sum(axis=1)
    out = np.full(len(pts), np.inf)
    for start in range(0, len(pts), 2048):
        p = pts[start:start + 2048, None, :]
        t = np.where(denom > 0, ((p - a) * ab).sum(axis=2) / np.where(denom > 0, denom, 1.0), 0.0)
        t = np.clip(t, 0.0, 1.0)
        proj = a + t[..., None] * ab
        out[start:start + 2048] = np.sqrt(((p - proj) ** 2).sum(axis=2)).min(axis=1)
    return out


def _covered_fraction(src: np.ndarray, other: np.ndarray, buffer_px: float) -> Optional[float]:
    mids, lens = densify(src)
    if len(lens) == 0:
        return None
    near = point_segment_distance(mids, other) <= buffer_px
    return math.fsum(lens[near]) / math.fsum(lens)


def line_correct_complete(pred, gt, buffer_px: float = DEFAULT_LINE_BUFFER_PX) -> LineMetrics:
    """Length-based correctness (pred near gt) and completeness (gt near pred)."""
    ps, gs = _segments(pred), _segments(gt)
    corr = _covered_fraction(ps, gs, buffer_px)
    comp = _covered_fraction(gs, ps, buffer_px)
    if corr is None and comp is None:
        return LineMetrics(1.0, 1.0, buffer_px)
    return LineMetrics(corr or 0.0, comp or 0.0, buffer_px)


# --- points ------------------------------------------------------------------

def point_buffer(diagonal_px: float) -> float:
    return POINT_BUFFER_FRACTION * diagonal_px


def match_points(pred: Sequence[PixelPoint], gt: Sequence[PixelPoint], buffer_px: float,
                 optimal: bool = False) -> list[tuple[int, int, float]]:
    """Greedy nearest-first one-to-one matching within ``buffer_px``
    (ties by pred then gt index); ``optimal`` maximizes the count."""
    if not pred or not gt:
        return []
    P = np.array([tuple(p)[:2] for p in pred], dtype=float)
    G = np.array([tuple(g)[:2] for g in gt], dtype=float)
    d = np.sqrt(((P[:, None, :] - G[None, :, :]) ** 2).sum(axis=2))
    if optimal:
        ok = d <= buffer_px
        rows, cols = linear_sum_assignment(-(ok.astype(float)))
        return [(int(r), int(c), float(d[r, c])) for r, c in zip(rows, cols) if ok[r, c]]
    ii, jj = np.nonzero(d <= buffer_px)
    order = sorted(zip(d[ii, jj].tolist(), ii.tolist(), jj.tolist()))
    used_p, used_g, out = set(), set(), []
    for dist, i, j in order:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        out.append((i, j, dist))
    return out


def point_prf(pred: Sequence[PixelPoint], gt: Sequence[PixelPoint], map_diagonal_px: float,
              optimal: bool = False) -> PixelMetrics:
    m = match_points(pred, gt, point_buffer(map_diagonal_px), optimal)
    return _prf(len(m), len(pred), len(gt), 0.0 if not m else len(m) / (len(pred) + len(gt) - len(m)))


# --- georeferencing ----------------------------------------------------------

class GeorefCategory(str, Enum):
    EXCELLENT = "Excellent"
    GOOD = "Good"
    FAIR = "Fair"


@dataclass(frozen=True)
class GeorefMetrics:
    rmse_geo: float
    rmse_pixel_norm: float
    category: GeorefCategory

    def to_dict(self) -> dict:
        return {"rmse_geo": self.rmse_geo, "rmse_pixel_norm": self.rmse_pixel_norm,
                "category": self.category.value}


def _check_pairs(a, b):
    if len(a) != len(b):
        raise ValidationError(f"point lists differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise ValidationError("RMSE of an empty point list")


def rmse_geo(pred: Sequence[GeoPoint], gt: Sequence[GeoPoint]) -> float:
    """Root mean square geodesic error in km."""
    _check_pairs(pred, gt)
    return math.sqrt(math.fsum(geodesic_distance(p, g) ** 2 for p, g in zip(pred, gt)) / len(pred))


def rmse_pixel_norm(pred: Sequence[PixelPoint], gt: Sequence[PixelPoint], diagonal_px: float) -> float:
    _check_pairs(pred, gt)
    if diagonal_px <= 0:
        raise ValidationError("diagonal must be positive")
    sq = [(p.x - g.x) ** 2 + (p.y - g.y) ** 2 for p, g in zip(pred, gt)]
    return math.sqrt(math.fsum(sq) / len(sq)) / diagonal_px


def categorize_georef(rmse_geo_km: float) -> GeorefCategory:
    if rmse_geo_km < EXCELLENT_KM:
        return GeorefCategory.EXCELLENT
    if rmse_geo_km < GOOD_KM:
        return GeorefCategory.GOOD
    return GeorefCategory.FAIR


def evaluate_georef(pred_h, truth_pixels: Sequence[PixelPoint], truth_geo: Sequence[GeoPoint],
                    diagonal_px: float) -> GeorefMetrics:
    """Metrics for a predicted pixel-to-geo homography against truth pairs.

    rmse_geo projects the truth pixels forward; rmse_pixel_norm projects the
    truth coordinates back through the inverse transform."""
    pred_geo = [GeoPoint(*_clamp(pred_h(p))) for p in truth_pixels]
    inv = pred_h.inverse()
    pred_px = [inv(PixelPoint(g.lon, g.lat)) for g in truth_geo]
    rg = rmse_geo(pred_geo, list(truth_geo))
    return GeorefMetrics(rg, rmse_pixel_norm(pred_px, list(truth_pixels), diagonal_px), categorize_georef(rg))


def _clamp(p: PixelPoint) -> tuple[float, float]:
    return (min(max(p.x, -180.0), 180.0), min(max(p.y, -90.0), 90.0))


# --- layout ------------------------------------------------------------------

def evaluate_layout(pred: MapLayout, gt: MapLayout, iou_threshold: float = 0.5) -> dict:
    """Content-area box IoU plus legend-region detection scores."""
    legend = detection_f1(list(pred.legend_region_bboxes), list(gt.legend_region_bboxes), iou_threshold)
    return {"content_iou": box_iou(pred.content_bbox, gt.content_bbox), "legend": legend.to_dict()}


# --- report ------------------------------------------------------------------

def aggregate_report(per_map: dict[str, dict], weight_key: str = "iou_count") -> dict:
    """Report with one block per map and an aggregate block.  Polygon blocks
    are weighted by their ``iou_count``; other blocks by equal weights."""
    names = sorted(per_map)
    items = [per_map[n] for n in names]
    weights = [float(it.get(weight_key, 1.0)) if weight_key in it else 1.0 for it in items]
    agg = weighted_aggregate(items, weights) if items else {}
    agg.pop(weight_key, None)
    return {"maps": {n: per_map[n] for n in names}, "aggregate": agg}


def write_report(per_map: dict[str, dict], path, weight_key: str = "iou_count") -> dict:
    from .io import write_json

    doc = aggregate_report(per_map, weight_key)
    write_json(doc, path)
    return doc
