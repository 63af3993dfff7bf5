"""Text-based georeferencing: coordinate labels at the content corners are
parsed, checked for consistency, and paired with refined corner pixels."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from ..errors import (
    DegenerateBBoxError,
    EmptyTitleError,
    MalformedDocumentError,
    MissingCornerError,
    UnparseableTextError,
    ValidationError,
)
from ..geometry import GeoPoint, GroundControlPoint, PixelPoint, fit_homography
from ..layout import _load_structured
from ..model import GcpSet, MapLayout, RasterMap
from .corners import CornerEstimate, CornerId, DEFAULT_WINDOW, refine_corners

logger = logging.getLogger(__name__)


class Axis(str, Enum):
    LAT = "lat"
    LON = "lon"


@dataclass(frozen=True)
class GeoLabel:
    text: str
    value: float
    axis: Axis
    anchor: PixelPoint

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        limit = 90.0 if self.axis is Axis.LAT else 180.0
        if not (-limit <= self.value <= limit):
            raise ValidationError(f"{self.axis.value} label {self.value} out of range")


# --- parsing -----------------------------------------------------------------

_NUM = r"(\d+(?:\.\d+)?)"
_COORD = re.compile(
    rf"""^\s*(?P<pre>[NSEWnsew])?\s*(?P<sign>[-+−])?\s*
    {_NUM}\s*(?:°|º|˚|deg|d)?\s*
    (?:{_NUM}\s*(?:′|'|’)\s*)?
    (?:{_NUM}\s*(?:″|"|''|”)\s*)?
    (?P<post>[NSEWnsew])?\s*$""",
    re.X,
)


def parse_coordinate_text(text: str) -> tuple[float, Optional[Axis]]:
    """Degrees from decimal or degree-minute-second text, plus an axis hint
    from an N/S/E/W hemisphere letter (S and W negate)."""
    m = _COORD.match(text or "")
    if not m:
        raise UnparseableTextError(f"cannot read coordinate from {text!r}")
    deg, minutes, seconds = m.group(3), m.group(4), m.group(5)
    if (minutes or seconds) and "." in deg:
        raise UnparseableTextError(f"fractional degrees with minutes in {text!r}")
    value = float(deg) + float(minutes or 0) / 60.0 + float(seconds or 0) / 3600.0
    if minutes and float(minutes) >= 60 or seconds and float(seconds) >= 60:
        raise UnparseableTextError(f"minutes/seconds out of range in {text!r}")
    pre, post = m.group("pre"), m.group("post")
    if pre and post:
        raise UnparseableTextError(f"two hemisphere letters in {text!r}")
    hemi = (pre or post or "").upper()
    if m.group("sign") in ("-", "−"):
        if hemi:
            raise UnparseableTextError(f"sign and hemisphere together in {text!r}")
        value = -value
    if hemi in ("S", "W"):
        value = -value
    axis = {"N": Axis.LAT, "S": Axis.LAT, "E": Axis.LON, "W": Axis.LON}.get(hemi)
    return value, axis


def label_from_text(text: str, anchor: PixelPoint, axis: Optional[str] = None) -> Optional[GeoLabel]:
    """Build a label; the axis comes from ``axis``, the hemisphere letter, or
    a magnitude above 90 (longitude).  Returns None when it stays unknown."""
    value, hint = parse_coordinate_text(text)
    chosen = Axis(axis) if axis else hint
    if chosen is None and abs(value) > 90.0:
        chosen = Axis.LON
    if chosen is None:
        logger.info("skipping label %r: axis unknown", text)
        return None
    return GeoLabel(text, value, chosen, anchor)


def labels_from_records(records: Iterable[dict]) -> list[GeoLabel]:
    """Labels from ``{text, x, y[, axis]}`` records (recognizer output).
    Unreadable texts are skipped with a log line."""
    out = []
    for r in records:
        try:
            lab = label_from_text(str(r["text"]), PixelPoint(float(r["x"]), float(r["y"])), r.get("axis"))
        except (UnparseableTextError, ValidationError) as exc:
            logger.info("skipping label: %s", exc)
            continue
        if lab is not None:
            out.append(lab)
    return out


def read_coordinate_labels(raster: RasterMap, client) -> list[GeoLabel]:
    """Ask the text model (task ``coordinate_labels``) for corner labels."""
    text = client.complete("coordinate_labels", "List every latitude/longitude label on the map "
                           "as JSON records {text, x, y} with the label centre in pixels.", "", [raster])
    doc = _load_structured(text)
    if isinstance(doc, dict):
        doc = doc.get("labels", [])
    if not isinstance(doc, list):
        raise MalformedDocumentError("coordinate label response is not a list")
    return labels_from_records(doc)


# --- validation --------------------------------------------------------------

@dataclass(frozen=True)
class GeocoordValidation:
    accepted: bool
    reason: Optional[str] = None
    lats: tuple[float, ...] = ()
    lons: tuple[float, ...] = ()

    def __bool__(self):
        return self.accepted


WRONG_COUNT = "wrong-count"
WRONG_UNIQUES = "wrong-uniques"
BAD_CORNER_DISTRIBUTION = "bad-corner-distribution"
_VALUE_DIGITS = 9


def _uniques(labels, axis) -> tuple[float, ...]:
    return tuple(sorted({round(l.value, _VALUE_DIGITS) for l in labels if l.axis is axis}))


def anchor_quadrant(anchor: PixelPoint, cx: float, cy: float) -> CornerId:
    north = anchor.y < cy
    west = anchor.x < cx
    return {(True, True): CornerId.NW, (True, False): CornerId.NE,
            (False, True): CornerId.SW, (False, False): CornerId.SE}[(north, west)]


def validate_geocoordinates(labels: Sequence[GeoLabel]) -> GeocoordValidation:
    """Accept exactly eight labels holding two distinct latitudes and two
    distinct longitudes, with one latitude and one longitude per corner.

    Corners are the quadrants around the centre of the anchors' extent, so
    the outcome does not depend on label order."""
    labels = list(labels)
    if len(labels) != 8:
        return GeocoordValidation(False, WRONG_COUNT)
    lats, lons = _uniques(labels, Axis.LAT), _uniques(labels, Axis.LON)
    if len(lats) != 2 or len(lons) != 2:
        return GeocoordValidation(False, WRONG_UNIQUES)
    xs = [l.anchor.x for l in labels]
    ys = [l.anchor.y for l in labels]
    cx, cy = (min(xs) + max(xs)) / 2.0, (min(ys) + max(ys)) / 2.0
    slots = {(c, a): 0 for c in CornerId for a in Axis}
    for l in labels:
        slots[(anchor_quadrant(l.anchor, cx, cy), l.axis)] += 1
    if any(n != 1 for n in slots.values()):
        return GeocoordValidation(False, BAD_CORNER_DISTRIBUTION)
    return GeocoordValidation(True, None, lats, lons)


# --- GCP assembly ------------------------------------------------------------

def _corner_points(corners: Sequence[CornerEstimate]) -> dict[CornerId, PixelPoint]:
    by_id = {c.corner_id: c.point for c in corners}
    missing = [c.value for c in CornerId if c not in by_id]
    if missing:
        raise MissingCornerError(f"missing corners: {', '.join(missing)}")
    return by_id


def _gcp_set(map_id: str, points: dict[CornerId, PixelPoint], geo: dict[CornerId, tuple[float, float]],
             metadata: dict) -> GcpSet:
    order = (CornerId.NW, CornerId.NE, CornerId.SW, CornerId.SE)
    gcps = [GroundControlPoint(points[c], GeoPoint(*geo[c])) for c in order]
    h = fit_homography([(g.pixel, PixelPoint(g.geo.lon, g.geo.lat)) for g in gcps])
    return GcpSet(map_id, gcps, h, metadata)


def assemble_gcps(corners: Sequence[CornerEstimate], lats, lons, map_id: str = "map",
                  metadata: Optional[dict] = None) -> GcpSet:
    """Four GCPs for a north-up map: the larger latitude goes to the top
    corners, the smaller (westmost) longitude to the left corners."""
    points = _corner_points(corners)
    lats, lons = sorted(set(lats)), sorted(set(lons))
    if len(lats) != 2 or len(lons) != 2:
        raise ValidationError("need two distinct latitudes and two distinct longitudes")
    (south, north), (west, east) = lats, lons
    geo = {CornerId.NW: (west, north), CornerId.NE: (east, north),
           CornerId.SW: (west, south), CornerId.SE: (east, south)}
    return _gcp_set(map_id, points, geo, dict(metadata or {}, method="text-labels"))


def corners_to_bbox_gcps(corners: Sequence[CornerEstimate], record, map_id: str = "map",
                         metadata: Optional[dict] = None) -> GcpSet:
    """Align the content corners to the bounding box of a topographic record."""
    b = record.bbox
    if b.is_degenerate:
        raise DegenerateBBoxError(f"record {record.id} has a degenerate bbox")
    points = _corner_points(corners)
    geo = {CornerId.NW: (b.min_lon, b.max_lat), CornerId.NE: (b.max_lon, b.max_lat),
           CornerId.SW: (b.min_lon, b.min_lat), CornerId.SE: (b.max_lon, b.min_lat)}
    return _gcp_set(map_id, points, geo, dict(metadata or {}, method="topo-bbox", record=record.id))


# --- title -------------------------------------------------------------------

TITLE_INSTRUCTION = "Return only the map title from the input map image."


def extract_title(raster: RasterMap, client) -> str:
    text = client.complete("title", TITLE_INSTRUCTION, "", [raster])
    for line in (text or "").splitlines():
        if line.strip():
            return line.strip()
    raise EmptyTitleError("title response is empty")


# --- pipeline ----------------------------------------------------------------

@dataclass
class TextGeorefResult:
    gcps: Optional[GcpSet]
    corners: list[CornerEstimate]
    validation: GeocoordValidation
    labels: list[GeoLabel] = field(default_factory=list)

    def report(self) -> dict:
        return {
            "method": "text-labels",
            "accepted": self.validation.accepted,
            "reason": self.validation.reason,
            "labels": len(self.labels),
            "corners": {c.corner_id.value: {"approx": list(c.approx),
                                            "refined": list(c.refined) if c.refined else None}
                        for c in self.corners},
        }


def georeference_text(raster: RasterMap, layout: MapLayout, labels: Sequence[GeoLabel],
                      window: int = DEFAULT_WINDOW) -> TextGeorefResult:
    """Refine the content corners and, if the labels pass validation, pair
    them into a GCP set.  ``gcps`` is None on rejection."""
    corners = refine_corners(raster, layout.content_bbox, window)
    validation = validate_geocoordinates(labels)
    gcps = None
    if validation.accepted:
        gcps = assemble_gcps(corners, validation.lats, validation.lons, raster.id)
    else:
        logger.info("coordinate labels rejected: %s", validation.reason)
    return TextGeorefResult(gcps, corners, validation, list(labels))


def labels_to_json(labels: Sequence[GeoLabel]) -> str:
    return json.dumps([{"text": l.text, "x": l.anchor.x, "y": l.anchor.y, "axis": l.axis.value}
                       for l in labels])
