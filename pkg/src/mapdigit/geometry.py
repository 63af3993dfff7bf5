"""Core geometric and geodesic types.

Pixel coordinates follow image convention: ``x`` grows to the right and ``y``
grows downward, with pixel ``(c, r)`` centred at ``(c, r)`` for point
features.  Geographic coordinates are WGS84 longitude/latitude in degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    DegenerateProjectionError,
    InsufficientPairsError,
    ValidationError,
)

EARTH_RADIUS_KM = 6371.0088
# Applied to the determinant of the Hartley-normalized system.
DEGENERACY_EPS = 1e-12
# Raw-determinant floor for a stored homography.  Pixel -> degree transforms
# have determinants on the order of (degrees per pixel)**2, so this is tiny.
HOMOGRAPHY_DET_EPS = 1e-18
PROJECTION_EPS = 1e-12


@dataclass(frozen=True, slots=True)
class PixelPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValidationError(f"non-finite pixel point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise ValidationError(f"longitude out of range: {self.lon}")
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise ValidationError(f"latitude out of range: {self.lat}")

    def __iter__(self):
        yield self.lon
        yield self.lat


@dataclass(frozen=True, slots=True)
class GroundControlPoint:
    pixel: PixelPoint
    geo: GeoPoint
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True, slots=True)
class PixelBBox:
    """Axis-aligned pixel box.  As a pixel region it is half-open:
    columns ``[xmin, xmax)`` and rows ``[ymin, ymax)``."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite bbox {vals}")
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValidationError(f"bbox min exceeds max: {vals}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> PixelPoint:
        return PixelPoint((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    def translate(self, dx: float, dy: float) -> "PixelBBox":
        return PixelBBox(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)

    def clip(self, other: "PixelBBox") -> "PixelBBox":
        """Clip to ``other``; a box entirely outside collapses onto its edge."""
        xmin = min(max(self.xmin, other.xmin), other.xmax)
        ymin = min(max(self.ymin, other.ymin), other.ymax)
        xmax = max(min(self.xmax, other.xmax), xmin)
        ymax = max(min(self.ymax, other.ymax), ymin)
        return PixelBBox(xmin, ymin, xmax, ymax)

    def contains_box(self, other: "PixelBBox") -> bool:
        return (self.xmin <= other.xmin and self.ymin <= other.ymin
                and other.xmax <= self.xmax and other.ymax <= self.ymax)

    def contains(self, p: PixelPoint) -> bool:
        return self.xmin <= p.x <= self.xmax and self.ymin <= p.y <= self.ymax


@dataclass(frozen=True, slots=True)
class GeoBBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        GeoPoint(self.min_lon, self.min_lat)
        GeoPoint(self.max_lon, self.max_lat)
        if self.min_lon > self.max_lon or self.min_lat > self.max_lat:
            raise ValidationError(
                f"geo bbox min exceeds max: {(self.min_lon, self.min_lat, self.max_lon, self.max_lat)}")

    def contains(self, p: GeoPoint) -> bool:
        return self.min_lon <= p.lon <= self.max_lon and self.min_lat <= p.lat <= self.max_lat

    @property
    def is_degenerate(self) -> bool:
        return self.min_lon == self.max_lon or self.min_lat == self.max_lat


def box_iou(a: PixelBBox, b: PixelBBox) -> float:
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def geodesic_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in kilometres (haversine, mean Earth radius)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    h = min(1.0, max(0.0, h))
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective transform stored with ``h[2][2] == 1`` when possible."""

    h: np.ndarray = field(repr=True)

    def __post_init__(self):
        m = np.array(self.h, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise ValidationError("homography has non-finite entries")
        if m[2, 2] != 0.0:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= HOMOGRAPHY_DET_EPS:
            raise DegenerateConfigurationError("homography is not invertible")
        m.setflags(write=False)
        object.__setattr__(self, "h", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self.h, other.h)

    def __hash__(self):
        return hash(self.h.tobytes())

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def then(self, other: "Homography") -> "Homography":
        """Composite transform: apply ``self`` first, then ``other``."""
        return Homography(other.h @ self.h)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.h.ravel()]

    def __call__(self, p: PixelPoint) -> PixelPoint:
        return apply_homography(self, p)

    def apply_array(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized projection of an ``(n, 2)`` array."""
        return project(self.h, pts)


def project(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    w = h[2, 0] * pts[:, 0] + h[2, 1] * pts[:, 1] + h[2, 2]
    if np.any(np.abs(w) < PROJECTION_EPS):
        raise DegenerateProjectionError("point maps to the line at infinity")
    x = (h[0, 0] * pts[:, 0] + h[0, 1] * pts[:, 1] + h[0, 2]) / w
    y = (h[1, 0] * pts[:, 0] + h[1, 1] * pts[:, 1] + h[1, 2]) / w
    return np.column_stack([x, y])


def apply_homography(H: Homography, p: PixelPoint) -> PixelPoint:
    h = H.h
    w = h[2, 0] * p.x + h[2, 1] * p.y + h[2, 2]
    if abs(w) < PROJECTION_EPS:
        raise DegenerateProjectionError(f"w = {w} for point ({p.x}, {p.y})")
    x = (h[0, 0] * p.x + h[0, 1] * p.y + h[0, 2]) / w
    y = (h[1, 0] * p.x + h[1, 1] * p.y + h[1, 2]) / w
    return PixelPoint(float(x), float(y))


def normalization_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d <= 0.0 or not np.isfinite(d):
        raise DegenerateConfigurationError("all points coincide")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def dlt_rows(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    n = len(src)
    a = np.zeros((2 * n, 9))
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    a[0::2, 8] = -u
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    a[1::2, 8] = -v
    return a


def _all_collinear(pts: np.ndarray, tol: float) -> bool:
    """True when the points span less than a plane."""
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv.size < 2 or sv[1] <= tol * max(sv[0], 1.0)


def fit_homography_arrays(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares DLT on Hartley-normalized coordinates; returns a 3x3 array."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("source and destination point counts differ")
    if len(src) < 4:
        raise InsufficientPairsError(f"homography needs at least 4 pairs, got {len(src)}")
    t_src = normalization_transform(src)
    t_dst = normalization_transform(dst)
    ns = project(t_src, src)
    nd = project(t_dst, dst)
    if _all_collinear(ns, 1e-9) or _all_collinear(nd, 1e-9):
        raise DegenerateConfigurationError("points are collinear")
    a = dlt_rows(ns, nd)
    if len(a) == 8:
        a = np.vstack([a, np.zeros(9)])
    _, s, vt = np.linalg.svd(a)
    # A second (near-)null direction means the pairs do not pin down H.
    if s[7] <= DEGENERACY_EPS * s[0]:
        raise DegenerateConfigurationError("correspondences do not determine a unique homography")
    hn = vt[-1].reshape(3, 3)
    hn = hn / np.linalg.norm(hn)
    if abs(np.linalg.det(hn)) <= DEGENERACY_EPS:
        raise DegenerateConfigurationError("normalized homography is singular")
    h = np.linalg.inv(t_dst) @ hn @ t_src
    if h[2, 2] != 0.0:
        h = h / h[2, 2]
    return h


def fit_homography(pairs: Sequence[tuple[PixelPoint, PixelPoint]]) -> Homography:
    """Fit the homography mapping each pair's first point onto its second."""
    pairs = list(pairs)
    if len(pairs) < 4:
        raise InsufficientPairsError(f"homography needs at least 4 pairs, got {len(pairs)}")
    src = np.array([[p.x, p.y] for p, _ in pairs], dtype=float)
    dst = np.array([[q.x, q.y] for _, q in pairs], dtype=float)
    return Homography(fit_homography_arrays(src, dst))


def affine_from_bbox(bbox: GeoBBox, width: float, height: float) -> Homography:
    """Pixel -> (lon, lat) map sending pixel (0, 0) to the NW corner and
    ``(width, height)`` to the SE corner."""
    sx = (bbox.max_lon - bbox.min_lon) / width
    sy = (bbox.max_lat - bbox.min_lat) / height
    return Homography(np.array([[sx, 0.0, bbox.min_lon],
                                [0.0, -sy, bbox.max_lat],
                                [0.0, 0.0, 1.0]]))


def geo_points(pts: Iterable[tuple[float, float]]) -> list[GeoPoint]:
    return [GeoPoint(float(lon), float(lat)) for lon, lat in pts]
