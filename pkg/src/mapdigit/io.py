"""Reading rasters and reading/writing GCP, layout and feature documents."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import SchemaError, UnreadableFileError, UnsupportedFormatError, ValidationError
from .geometry import (
    GeoPoint,
    GroundControlPoint,
    Homography,
    PixelBBox,
    PixelPoint,
)
from .model import (
    FeatureKind,
    GcpSet,
    LegendItem,
    LineGraph,
    MapLayout,
    PointFeature,
    PolygonFeature,
    RasterMap,
    orient_ring,
)

logger = logging.getLogger(__name__)

GCP_SCHEMA_VERSION = 1
LAYOUT_SCHEMA_VERSION = 1
SUPPORTED_RASTER_FORMATS = {"PNG", "TIFF"}

# Rasters here are full map sheets; lift Pillow's decompression-bomb guard.
Image.MAX_IMAGE_PIXELS = None


def load_raster(path, id: Optional[str] = None) -> RasterMap:
    path = Path(path)
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in SUPPORTED_RASTER_FORMATS:
                raise UnsupportedFormatError(f"{path}: {fmt} rasters are not supported")
            im.load()
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError as exc:
        raise UnreadableFileError(f"{path}: no such file") from exc
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a recognised raster") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        raise UnreadableFileError(f"{path}: {exc}") from exc
    return RasterMap(id or path.stem, arr)


def save_raster(raster: RasterMap, path) -> None:
    Image.fromarray(np.asarray(raster.pixels)).save(path, format="PNG")


def _write_json(doc, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")
    os.replace(tmp, path)


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


# --- GCP documents -------------------------------------------------------

def gcps_to_dict(gcps: GcpSet) -> dict:
    doc = {
        "schema_version": GCP_SCHEMA_VERSION,
        "map_id": gcps.map_id,
        "gcps": [
            {"px": g.pixel.x, "py": g.pixel.y, "lon": g.geo.lon, "lat": g.geo.lat,
             "confidence": g.confidence}
            for g in gcps.gcps
        ],
        "homography": gcps.homography.to_list() if gcps.homography is not None else None,
    }
    if gcps.metadata:
        doc["metadata"] = gcps.metadata
    return doc


def gcps_from_dict(doc: dict) -> GcpSet:
    if not isinstance(doc, dict):
        raise SchemaError("GCP document must be an object")
    version = doc.get("schema_version")
    if version != GCP_SCHEMA_VERSION:
        raise SchemaError(f"unsupported GCP schema_version {version!r}")
    for key in ("map_id", "gcps"):
        if key not in doc:
            raise SchemaError(f"GCP document is missing {key!r}")
    out = []
    for i, g in enumerate(doc["gcps"]):
        missing = [k for k in ("px", "py", "lon", "lat") if k not in g]
        if missing:
            raise SchemaError(f"gcp {i} is missing {', '.join(missing)}")
        out.append(GroundControlPoint(
            PixelPoint(float(g["px"]), float(g["py"])),
            GeoPoint(float(g["lon"]), float(g["lat"])),
            float(g.get("confidence", 1.0)),
        ))
    h = doc.get("homography")
    if h is not None:
        if len(h) != 9:
            raise SchemaError("homography must have 9 entries")
        h = Homography(np.array(h, dtype=float))
    return GcpSet(str(doc["map_id"]), tuple(out), h, dict(doc.get("metadata") or {}))


def save_gcps(gcps: GcpSet, path) -> None:
    _write_json(gcps_to_dict(gcps), path)


def load_gcps(path) -> GcpSet:
    return gcps_from_dict(_read_json(path))


# --- layout documents ----------------------------------------------------

def _bbox_list(b: PixelBBox) -> list[float]:
    return [b.xmin, b.ymin, b.xmax, b.ymax]


def _bbox(v) -> PixelBBox:
    if v is None or len(v) != 4:
        raise SchemaError(f"bbox must have 4 numbers, got {v!r}")
    return PixelBBox(*(float(c) for c in v))


def layout_to_dict(layout: MapLayout) -> dict:
    return {
        "schema_version": LAYOUT_SCHEMA_VERSION,
        "content_bbox": _bbox_list(layout.content_bbox),
        "legend_regions": [_bbox_list(b) for b in layout.legend_region_bboxes],
        "title_bbox": _bbox_list(layout.title_bbox) if layout.title_bbox else None,
        "items": [
            {"label": it.label, "kind": it.kind.value, "swatch_bbox": _bbox_list(it.swatch_bbox),
             "description_bbox": _bbox_list(it.description_bbox),
             "description_text": it.description_text}
            for it in layout.items
        ],
    }


def layout_from_dict(doc: dict) -> MapLayout:
    if "content_bbox" not in doc:
        raise SchemaError("layout document is missing 'content_bbox'")
    try:
        items = tuple(
            LegendItem(it["label"], FeatureKind(it.get("kind", "polygon")), _bbox(it["swatch_bbox"]),
                       _bbox(it.get("description_bbox", it["swatch_bbox"])),
                       it.get("description_text", ""))
            for it in doc.get("items", [])
        )
    except KeyError as exc:
        raise SchemaError(f"legend item is missing {exc}") from exc
    title = doc.get("title_bbox")
    return MapLayout(
        _bbox(doc["content_bbox"]),
        tuple(_bbox(b) for b in doc.get("legend_regions", [])),
        _bbox(title) if title else None,
        items,
    )


def save_layout(layout: MapLayout, path) -> None:
    _write_json(layout_to_dict(layout), path)


def load_layout(path) -> MapLayout:
    return layout_from_dict(_read_json(path))


# --- feature output ------------------------------------------------------

def _transformer(gcps: Optional[GcpSet]):
    if gcps is not None and gcps.homography is not None:
        h = gcps.homography
        return (lambda pts: h.apply_array(np.asarray(pts, dtype=float))), True
    return (lambda pts: np.asarray(pts, dtype=float).reshape(-1, 2)), False


def _ring_coords(ring, tf, ccw: bool) -> list[list[float]]:
    pts = tf([[p.x, p.y] for p in ring])
    coords = [[float(x), float(y)] for x, y in pts]
    if coords[0] != coords[-1]:
        coords.append(list(coords[0]))
    return orient_ring(coords, ccw)


def features_to_geojson(features, gcps: Optional[GcpSet] = None) -> dict:
    """Build a FeatureCollection.  Rings follow the right-hand rule in the
    output frame: exterior counter-clockwise, holes clockwise."""
    tf, georeferenced = _transformer(gcps)
    out = []
    for poly in features.polygons:
        rings = [_ring_coords(poly.outer, tf, True)]
        rings += [_ring_coords(h, tf, False) for h in poly.holes]
        out.append({"type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": rings},
                    "properties": {"label": poly.label, "kind": "polygon",
                                   "confidence": poly.confidence}})
    for graph in features.lines:
        coords = tf(graph.coords()) if graph.nodes else np.zeros((0, 2))
        segs = [[[float(coords[a][0]), float(coords[a][1])], [float(coords[b][0]), float(coords[b][1])]]
                for a, b in graph.edges]
        out.append({"type": "Feature",
                    "geometry": {"type": "MultiLineString", "coordinates": segs},
                    "properties": {"label": graph.label, "kind": "line", "confidence": 1.0}})
    for pt in features.points:
        (x, y), = tf([[pt.point.x, pt.point.y]])
        out.append({"type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [float(x), float(y)]},
                    "properties": {"label": pt.label, "kind": "point",
                                   "confidence": pt.confidence}})
    doc = {"type": "FeatureCollection", "features": out}
    if not georeferenced:
        doc["crs"] = "pixel"
    return doc


def save_features_geojson(features, gcps: Optional[GcpSet], path) -> None:
    _write_json(features_to_geojson(features, gcps), path)


def load_features_geojson(path):
    """Read a pixel-CRS FeatureCollection back into a VectorFeatureSet."""
    from .model import VectorFeatureSet

    doc = _read_json(path)
    if doc.get("type") != "FeatureCollection":
        raise SchemaError(f"{path}: not a FeatureCollection")
    polys, lines, points = [], [], []
    for f in doc.get("features", []):
        geom = f.get("geometry") or {}
        props = f.get("properties") or {}
        label = props.get("label", "")
        conf = props.get("confidence")
        conf = 1.0 if conf is None else float(conf)
        kind = geom.get("type")
        if kind == "Polygon":
            rings = [tuple(PixelPoint(*c) for c in r) for r in geom["coordinates"]]
            polys.append(PolygonFeature(label, rings[0], tuple(rings[1:]), conf))
        elif kind == "MultiLineString":
            nodes, index, edges = [], {}, []
            for seg in geom["coordinates"]:
                ids = []
                for c in seg:
                    key = (float(c[0]), float(c[1]))
                    if key not in index:
                        index[key] = len(nodes)
                        nodes.append(PixelPoint(*key))
                    ids.append(index[key])
                for a, b in zip(ids, ids[1:]):
                    if a != b and (a, b) not in edges and (b, a) not in edges:
                        edges.append((a, b))
            lines.append(LineGraph(tuple(nodes), tuple(edges), label))
        elif kind == "Point":
            points.append(PointFeature(label, PixelPoint(*geom["coordinates"][:2]), conf))
        else:
            raise ValidationError(f"unsupported geometry type {kind!r}")
    return VectorFeatureSet(tuple(polys), tuple(lines), tuple(points))


def write_json(doc, path) -> None:
    _write_json(doc, path)


def read_json(path):
    return _read_json(path)
