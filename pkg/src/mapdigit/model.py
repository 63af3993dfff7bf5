"""Document model for scanned maps and their extracted content."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ValidationError
from .geometry import GroundControlPoint, Homography, PixelBBox, PixelPoint


class FeatureKind(str, Enum):
    POLYGON = "polygon"
    LINE = "line"
    POINT = "point"


@dataclass(frozen=True, eq=False)
class RasterMap:
    """An RGB 8-bit raster.  ``pixels`` has shape ``(height, width, 3)`` and
    is made read-only on construction."""

    id: str
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"pixels must have shape (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError("raster must be at least 1x1")
        if px.dtype != np.uint8:
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        if px.flags.writeable:
            px = px.copy()
            px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def bounds(self) -> PixelBBox:
        return PixelBBox(0, 0, self.width, self.height)

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def crop(self, bbox: PixelBBox, id: Optional[str] = None) -> "RasterMap":
        b = bbox.clip(self.bounds)
        x0, y0 = int(b.xmin), int(b.ymin)
        x1, y1 = int(np.ceil(b.xmax)), int(np.ceil(b.ymax))
        if x1 <= x0 or y1 <= y0:
            raise ValidationError(f"crop {bbox} is empty inside the raster")
        return RasterMap(id or self.id, self.pixels[y0:y1, x0:x1])

    def gray(self) -> np.ndarray:
        p = self.pixels.astype(np.float32)
        return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]

    def __eq__(self, other):
        return (isinstance(other, RasterMap) and self.id == other.id
                and np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True)
class LegendItem:
    label: str
    kind: FeatureKind
    swatch_bbox: PixelBBox
    description_bbox: PixelBBox
    description_text: str = ""

    def __post_init__(self):
        if not self.label:
            raise ValidationError("legend item label must be non-empty")
        object.__setattr__(self, "kind", FeatureKind(self.kind))


@dataclass(frozen=True)
class MapLayout:
    content_bbox: PixelBBox
    legend_region_bboxes: tuple[PixelBBox, ...] = ()
    title_bbox: Optional[PixelBBox] = None
    items: tuple[LegendItem, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "legend_region_bboxes", tuple(self.legend_region_bboxes))
        object.__setattr__(self, "items", tuple(self.items))

    def check_bounds(self, raster: RasterMap) -> list[str]:
        """Return human-readable problems; empty when the layout fits the map."""
        problems = []
        bounds = raster.bounds
        if not bounds.contains_box(self.content_bbox):
            problems.append("content bbox exceeds map bounds")
        for item in self.items:
            for name in ("swatch_bbox", "description_bbox"):
                box = getattr(item, name)
                if not bounds.contains_box(box):
                    problems.append(f"{item.label}: {name} exceeds map bounds")
                elif self.legend_region_bboxes and not any(
                        r.contains_box(box) for r in self.legend_region_bboxes):
                    problems.append(f"{item.label}: {name} outside every legend region")
        return problems


@dataclass(frozen=True)
class LineGraph:
    nodes: tuple[PixelPoint, ...]
    edges: tuple[tuple[int, int], ...]
    label: str = ""

    def __post_init__(self):
        nodes = tuple(n if isinstance(n, PixelPoint) else PixelPoint(*n) for n in self.nodes)
        seen = set()
        edges = []
        for a, b in self.edges:
            a, b = int(a), int(b)
            if not (0 <= a < len(nodes) and 0 <= b < len(nodes)):
                raise ValidationError(f"edge ({a}, {b}) references a missing node")
            if a == b:
                raise ValidationError(f"self-loop on node {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValidationError(f"duplicate edge {key}")
            seen.add(key)
            edges.append((a, b))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(edges))

    def coords(self) -> np.ndarray:
        return np.array([[n.x, n.y] for n in self.nodes], dtype=float).reshape(-1, 2)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(len(self.nodes), dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg


Ring = tuple[PixelPoint, ...]


def ring_signed_area(ring) -> float:
    """Shoelace area; positive for counter-clockwise in a y-up frame."""
    pts = np.array([tuple(p)[:2] for p in ring], dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1])
                       + x[-1] * y[0] - x[0] * y[-1])


def orient_ring(ring, ccw: bool):
    ring = list(ring)
    if (ring_signed_area(ring) > 0) != ccw:
        ring.reverse()
    return ring


@dataclass(frozen=True)
class PolygonFeature:
    label: str
    outer: Ring
    holes: tuple[Ring, ...] = ()
    confidence: float = 1.0

    def __post_init__(self):
        to_pts = lambda ring: tuple(p if isinstance(p, PixelPoint) else PixelPoint(*p) for p in ring)
        object.__setattr__(self, "outer", to_pts(self.outer))
        object.__setattr__(self, "holes", tuple(to_pts(h) for h in self.holes))

    @property
    def area(self) -> float:
        return abs(ring_signed_area(self.outer)) - sum(abs(ring_signed_area(h)) for h in self.holes)


@dataclass(frozen=True)
class PointFeature:
    label: str
    point: PixelPoint
    confidence: float = 1.0


@dataclass(frozen=True)
class VectorFeatureSet:
    polygons: tuple[PolygonFeature, ...] = ()
    lines: tuple[LineGraph, ...] = ()
    points: tuple[PointFeature, ...] = ()

    def __post_init__(self):
        for name in ("polygons", "lines", "points"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


def validate_polygon(poly: PolygonFeature) -> list[str]:
    """Check ring closure and orientation (outer CCW, holes CW, y-up shoelace)."""
    problems = []
    for i, ring in enumerate((poly.outer,) + poly.holes):
        role = "outer" if i == 0 else f"hole {i - 1}"
        if len(ring) < 4:
            problems.append(f"{role}: fewer than 4 vertices")
            continue
        if ring[0] != ring[-1]:
            problems.append(f"{role}: ring not closed")
        area = ring_signed_area(ring)
        if i == 0 and area <= 0:
            problems.append("outer: ring not counter-clockwise")
        if i > 0 and area >= 0:
            problems.append(f"{role}: ring not clockwise")
    return problems


@dataclass(frozen=True)
class GcpSet:
    map_id: str
    gcps: tuple[GroundControlPoint, ...]
    homography: Optional[Homography] = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gcps", tuple(self.gcps))
        if len(self.gcps) < 1:
            raise ValidationError("a GCP set needs at least one GCP")

    def check_bounds(self, width: int, height: int) -> list[str]:
        return [f"gcp {i} outside map" for i, g in enumerate(self.gcps)
                if not (0 <= g.pixel.x <= width and 0 <= g.pixel.y <= height)]
