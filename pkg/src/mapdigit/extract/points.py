"""Point-symbol detection plumbing around a detector client."""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from ..cropper import PatchGrid, crop, merge_detections, to_global
from ..errors import ValidationError
from ..geometry import PixelBBox
from ..model import PointFeature, RasterMap

logger = logging.getLogger(__name__)

# Twelve symbol classes; the last seven are common geologic map symbols
# chosen to complete the catalog and can be overridden per job.
POINT_CATALOG: tuple[str, ...] = (
    "inclined_bedding",
    "inclined_foliation_metamorphic",
    "overturned_bedding",
    "lineation",
    "inclined_foliation_igneous",
    "vertical_bedding",
    "horizontal_bedding",
    "vertical_foliation",
    "inclined_joint",
    "vertical_joint",
    "mine_shaft",
    "prospect",
)


@dataclass(frozen=True)
class PointDetection:
    cls: str
    bbox: PixelBBox
    confidence: float

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(f"detection confidence outside [0, 1]: {self.confidence}")

    def to_feature(self) -> PointFeature:
        return PointFeature(self.cls, self.bbox.center, self.confidence)


def detect_points(raster: RasterMap, grid: PatchGrid, detector, catalog: Iterable[str] = POINT_CATALOG,
                  iou_threshold: float = 0.5, workers: int = 1) -> list[PointDetection]:
    """Crop, detect per patch, move boxes to map coordinates, drop classes
    outside ``catalog`` and merge duplicates from overlapping patches."""
    catalog = set(catalog)
    patches = crop(raster, grid)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_patch = list(pool.map(detector.detect, patches))
    else:
        per_patch = [detector.detect(p) for p in patches]
    found, rejected = [], Counter()
    for patch, dets in zip(patches, per_patch):
        for d in dets:
            if d.cls not in catalog:
                rejected[d.cls] += 1
                continue
            found.append(PointDetection(d.cls, to_global(patch, d.bbox), float(d.confidence)))
    if rejected:
        logger.warning("dropped %d detections of classes outside the catalog: %s",
                       sum(rejected.values()), dict(sorted(rejected.items())))
    return merge_detections(found, iou_threshold)
