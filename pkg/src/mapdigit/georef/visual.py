"""Visual georeferencing: match the query map against nearby topographic
maps, fit a homography with RANSAC, keep the most confident candidate."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ..clients import KeypointMatch
from ..errors import DegenerateConfigurationError, GeometryError, InsufficientPairsError, NoConsensusError
from ..geometry import (
    DEGENERACY_EPS,
    GeoBBox,
    GeoPoint,
    GroundControlPoint,
    Homography,
    PixelBBox,
    PixelPoint,
    affine_from_bbox,
    fit_homography_arrays,
    geodesic_distance,
    normalization_transform,
    project,
)
from ..model import GcpSet, RasterMap
from .topo import TopoIndex, TopoRecord

logger = logging.getLogger(__name__)

DEFAULT_BUFFER_KM = 10.0
MIN_INLIERS = 4
CONFIDENCE_FLOOR = 0.5
MAX_REFITS = 20


# --- candidate buffering -----------------------------------------------------

def _meridian_distance(p: GeoPoint, lon: float, lat_lo: float, lat_hi: float) -> float:
    """Distance from ``p`` to the meridian segment at ``lon``."""
    cands = [lat_lo, lat_hi]
    dl = math.radians(p.lon - lon)
    if math.cos(dl) > 0:
        best = math.degrees(math.atan(math.tan(math.radians(p.lat)) / math.cos(dl)))
        cands.append(min(max(best, lat_lo), lat_hi))
    return min(geodesic_distance(p, GeoPoint(lon, la)) for la in cands)


def point_bbox_distance(p: GeoPoint, b: GeoBBox) -> float:
    """Geodesic distance from a point to the nearest point of a bbox (0 inside)."""
    if b.contains(p):
        return 0.0
    clamped_lon = min(max(p.lon, b.min_lon), b.max_lon)
    d = min(geodesic_distance(p, GeoPoint(clamped_lon, b.min_lat)),
            geodesic_distance(p, GeoPoint(clamped_lon, b.max_lat)))
    d = min(d, _meridian_distance(p, b.min_lon, b.min_lat, b.max_lat),
            _meridian_distance(p, b.max_lon, b.min_lat, b.max_lat))
    return d


def _corners(b: GeoBBox) -> list[GeoPoint]:
    return [GeoPoint(b.min_lon, b.min_lat), GeoPoint(b.min_lon, b.max_lat),
            GeoPoint(b.max_lon, b.min_lat), GeoPoint(b.max_lon, b.max_lat)]


def bbox_distance(a: GeoBBox, b: GeoBBox) -> float:
    overlap = a.min_lon <= b.max_lon and b.min_lon <= a.max_lon and a.min_lat <= b.max_lat and b.min_lat <= a.max_lat
    if overlap:
        return 0.0
    return min(min(point_bbox_distance(p, b) for p in _corners(a)),
               min(point_bbox_distance(p, a) for p in _corners(b)))


def anchor_distance(anchor: Union[GeoPoint, GeoBBox], b: GeoBBox) -> float:
    if isinstance(anchor, GeoBBox):
        return bbox_distance(anchor, b)
    return point_bbox_distance(anchor, b)


def select_candidates(anchor: Union[GeoPoint, GeoBBox], index: TopoIndex,
                      buffer_km: float = DEFAULT_BUFFER_KM) -> list[TopoRecord]:
    """Records whose bbox lies within ``buffer_km`` of the anchor, in index order."""
    return [r for r in index if anchor_distance(anchor, r.bbox) <= buffer_km]


# --- RANSAC ------------------------------------------------------------------

@dataclass(frozen=True)
class RansacParams:
    iterations: int = 2000
    reproj_threshold_px: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.reproj_threshold_px > 0:
            raise ValueError("reproj_threshold_px must be > 0")


def _match_arrays(matches: Sequence[KeypointMatch]) -> tuple[np.ndarray, np.ndarray]:
    src = np.array([[m.query_px.x, m.query_px.y] for m in matches], dtype=float).reshape(-1, 2)
    dst = np.array([[m.candidate_px.x, m.candidate_px.y] for m in matches], dtype=float).reshape(-1, 2)
    return src, dst


def _sample_indices(rng: np.random.Generator, n: int, iterations: int) -> np.ndarray:
    """``iterations`` rows of 4 distinct indices in [0, n)."""
    if n <= 64:
        return np.argsort(rng.random((iterations, n)), axis=1)[:, :4]
    out = rng.integers(0, n, size=(iterations, 4))
    for _ in range(100):
        s = np.sort(out, axis=1)
        bad = (np.diff(s, axis=1) == 0).any(axis=1)
        if not bad.any():
            break
        out[bad] = rng.integers(0, n, size=(int(bad.sum()), 4))
    return out


def _collinear_samples(pts: np.ndarray, tol: float) -> np.ndarray:
    """True for (k, 4, 2) samples having any three (near-)collinear points."""
    bad = np.zeros(len(pts), dtype=bool)
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, c = pts[:, i], pts[:, j], pts[:, k]
        cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        bad |= np.abs(cross) <= tol
    return bad


def _batch_fit(ns: np.ndarray, nd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact 4-point fits for (k, 4, 2) normalized samples with h22 = 1:
    (k, 3, 3) homographies and a mask of well-posed samples."""
    k = len(ns)
    x, y = ns[..., 0], ns[..., 1]
    u, v = nd[..., 0], nd[..., 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    a = np.empty((k, 8, 8))
    a[:, 0::2] = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y], axis=-1)
    a[:, 1::2] = np.stack([zero, zero, zero, x, y, one, -v * x, -v * y], axis=-1)
    rhs = np.empty((k, 8))
    rhs[:, 0::2], rhs[:, 1::2] = u, v
    ok = np.abs(np.linalg.det(a)) > 1e-10
    h = np.zeros((k, 9))
    h[:, 8] = 1.0
    if ok.any():
        h[ok, :8] = np.linalg.solve(a[ok], rhs[ok][..., None])[..., 0]
    h = h.reshape(k, 3, 3)
    ok &= np.all(np.isfinite(h), axis=(1, 2)) & (np.abs(np.linalg.det(h)) > DEGENERACY_EPS)
    return h, ok


def _reproj_errors(hs: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Reprojection errors for (k, 3, 3) homographies over n points: (k, n)."""
    ph = np.concatenate([src, np.ones((len(src), 1))], axis=1)
    q = np.matmul(hs, ph.T)  # (k, 3, n)
    w = q[:, 2]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        err = np.hypot(q[:, 0] / w - dst[:, 0], q[:, 1] / w - dst[:, 1])
    err[~np.isfinite(err) | (np.abs(w) < 1e-12)] = np.inf
    return err


def ransac_homography(matches: Sequence[KeypointMatch], params: RansacParams = RansacParams(),
                      rng: Optional[np.random.Generator] = None) -> tuple[Homography, list[int]]:
    """Seeded RANSAC over 4-match samples, then an iterated least-squares
    refit on the consensus set.  Every returned inlier index reprojects
    strictly within the threshold under the returned homography."""
    n = len(matches)
    if n < MIN_INLIERS:
        raise InsufficientPairsError(f"RANSAC needs at least {MIN_INLIERS} matches, got {n}")
    src, dst = _match_arrays(matches)
    thr = params.reproj_threshold_px
    if rng is None:
        rng = np.random.default_rng(params.seed)
    try:
        t_src = normalization_transform(src)
        t_dst = normalization_transform(dst)
    except DegenerateConfigurationError as exc:
        raise NoConsensusError(str(exc)) from exc
    ns, nd = project(t_src, src), project(t_dst, dst)

    idx = _sample_indices(rng, n, params.iterations)
    s_src, s_dst = ns[idx], nd[idx]
    valid = ~(_collinear_samples(s_src, 1e-9) | _collinear_samples(s_dst, 1e-9))
    if not valid.any():
        raise NoConsensusError("every sample is degenerate (collinear points)")
    hn, ok = _batch_fit(s_src[valid], s_dst[valid])
    hn = hn[ok]
    if len(hn) == 0:
        raise NoConsensusError("every sample is degenerate")
    hs = np.linalg.inv(t_dst) @ hn @ t_src
    err = _reproj_errors(hs, src, dst)
    counts = (err < thr).sum(axis=1)
    best = int(np.argmax(counts))  # first iteration wins ties
    if counts[best] < MIN_INLIERS:
        raise NoConsensusError(f"best consensus has {int(counts[best])} inliers")

    h_best = hs[best] / hs[best][2, 2] if hs[best][2, 2] != 0 else hs[best]
    inliers = np.flatnonzero(err[best] < thr)
    for _ in range(MAX_REFITS):
        try:
            h_new = fit_homography_arrays(src[inliers], dst[inliers])
        except GeometryError:
            break
        new_inliers = np.flatnonzero(_reproj_errors(h_new[None], src, dst)[0] < thr)
        if len(new_inliers) < len(inliers):
            break  # the refit lost support; keep the previous model
        done = np.array_equal(new_inliers, inliers)
        h_best, inliers = h_new, new_inliers
        if done:
            break
    H = Homography(h_best)
    final = _reproj_errors(H.h[None], src, dst)[0]
    inliers = np.flatnonzero(final < thr)
    if len(inliers) < MIN_INLIERS:
        raise NoConsensusError(f"refit consensus has {len(inliers)} inliers")
    return H, [int(i) for i in inliers]


# --- candidate scoring -------------------------------------------------------

@dataclass
class CandidateResult:
    record: TopoRecord
    homography: Optional[Homography]
    inliers: list[KeypointMatch] = field(default_factory=list)
    mean_confidence: float = 0.0
    note: str = ""

    def __post_init__(self):
        confs = [m.confidence for m in self.inliers]
        self.mean_confidence = float(np.mean(confs)) if confs else 0.0


def score_and_select(results: Sequence[CandidateResult]) -> Optional[CandidateResult]:
    """Highest mean inlier confidence among candidates with a homography;
    None when that best mean is below the floor."""
    usable = [r for r in results if r.homography is not None]
    if not usable:
        return None
    best = max(usable, key=lambda r: r.mean_confidence)  # first wins ties
    if best.mean_confidence < CONFIDENCE_FLOOR:
        return None
    return best


def confidence_pool(matches: Sequence[KeypointMatch], floor: float = CONFIDENCE_FLOOR) -> list[KeypointMatch]:
    """Matches strictly above the confidence floor."""
    return [m for m in matches if m.confidence > floor]


def evaluate_candidate(query: RasterMap, record: TopoRecord, candidate: RasterMap, matcher,
                       params: RansacParams, prefilter: bool = True) -> CandidateResult:
    """Match, confidence-filter and fit one candidate.  With ``prefilter``
    the confidence floor applies before RANSAC, otherwise to its inliers."""
    matches = list(matcher.match(query, candidate))
    pool = confidence_pool(matches) if prefilter else matches
    try:
        H, idx = ransac_homography(pool, params)
    except GeometryError as exc:
        return CandidateResult(record, None, note=str(exc))
    inliers = [pool[i] for i in idx]
    if not prefilter:
        inliers = confidence_pool(inliers)
        if len(inliers) < MIN_INLIERS:
            return CandidateResult(record, None, note="too few confident inliers")
        try:
            H, idx = ransac_homography(inliers, params)
        except GeometryError as exc:
            return CandidateResult(record, None, note=str(exc))
        inliers = [inliers[i] for i in idx]
    return CandidateResult(record, H, inliers)


def georeference_visual(query: RasterMap, candidates: Sequence[TopoRecord], matcher,
                        candidate_rasters: Mapping[str, RasterMap], params: RansacParams = RansacParams(),
                        content_bbox: Optional[PixelBBox] = None, prefilter: bool = True,
                        workers: int = 1) -> Optional[GcpSet]:
    """Georeference ``query`` through the best-matching candidate, or None
    when no candidate passes the gates.

    Candidate ``i`` uses seed ``params.seed + i``.  The query-to-candidate
    homography is composed with the candidate's pixel-to-geo affine, and
    GCPs are emitted at the four corners of ``content_bbox`` (default: the
    whole query raster)."""
    def run(i_rec):
        i, rec = i_rec
        raster = candidate_rasters.get(rec.id)
        if raster is None:
            return CandidateResult(rec, None, note="no raster")
        p = RansacParams(params.iterations, params.reproj_threshold_px, params.seed + i)
        return evaluate_candidate(query, rec, raster, matcher, p, prefilter)

    jobs = list(enumerate(candidates))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    for r in results:
        logger.info("candidate %s: inliers=%d mean=%.3f %s", r.record.id, len(r.inliers),
                    r.mean_confidence, r.note)
    best = score_and_select(results)
    if best is None:
        return None
    cand = candidate_rasters[best.record.id]
    to_geo = best.homography.then(affine_from_bbox(best.record.bbox, cand.width, cand.height))
    box = content_bbox or query.bounds
    pixels = [PixelPoint(box.xmin, box.ymin), PixelPoint(box.xmax, box.ymin),
              PixelPoint(box.xmin, box.ymax), PixelPoint(box.xmax, box.ymax)]
    gcps = []
    for px in pixels:
        g = to_geo(px)
        gcps.append(GroundControlPoint(px, GeoPoint(g.x, g.y), best.mean_confidence))
    meta = {"method": "visual", "record": best.record.id, "inliers": len(best.inliers),
            "mean_confidence": best.mean_confidence}
    return GcpSet(query.id, gcps, to_geo, meta)
