"""Tile large maps into fixed-size patches and merge per-patch detections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, TypeVar, Union

import numpy as np

from .errors import ValidationError
from .geometry import PixelBBox, PixelPoint, box_iou
from .model import RasterMap


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int = 1000
    stride: int | None = None
    pad_color: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self):
        if self.stride is None:
            object.__setattr__(self, "stride", self.patch_size)
        if self.patch_size <= 0 or not (0 < self.stride <= self.patch_size):
            raise ValidationError(f"need 0 < stride <= patch_size, got {self.stride}, {self.patch_size}")

    def count(self, length: int) -> int:
        """Patches along an axis of ``length`` pixels."""
        if length <= self.patch_size:
            return 1
        return math.ceil((length - self.patch_size) / self.stride) + 1


@dataclass(frozen=True)
class Patch:
    origin: PixelPoint
    image: RasterMap
    # Unpadded extent inside the source map, in map coordinates.
    valid: PixelBBox

    @property
    def bbox(self) -> PixelBBox:
        return PixelBBox(self.origin.x, self.origin.y,
                         self.origin.x + self.image.width, self.origin.y + self.image.height)


def crop(raster: RasterMap, grid: PatchGrid = PatchGrid()) -> list[Patch]:
    """Row-major list of ``patch_size`` square patches; edge patches are padded."""
    size = grid.patch_size
    nx, ny = grid.count(raster.width), grid.count(raster.height)
    src = raster.pixels
    patches = []
    for j in range(ny):
        for i in range(nx):
            x0, y0 = i * grid.stride, j * grid.stride
            x1, y1 = min(x0 + size, raster.width), min(y0 + size, raster.height)
            buf = np.empty((size, size, 3), dtype=np.uint8)
            buf[...] = grid.pad_color
            buf[: y1 - y0, : x1 - x0] = src[y0:y1, x0:x1]
            patches.append(Patch(PixelPoint(x0, y0),
                                 RasterMap(f"{raster.id}_{x0}_{y0}", buf),
                                 PixelBBox(x0, y0, x1, y1)))
    return patches


G = TypeVar("G", PixelPoint, PixelBBox)


def to_global(patch: Patch, local: G) -> G:
    dx, dy = patch.origin.x, patch.origin.y
    if isinstance(local, PixelBBox):
        return local.translate(dx, dy)
    return PixelPoint(local.x + dx, local.y + dy)


def to_local(patch: Patch, glob: G) -> G:
    dx, dy = patch.origin.x, patch.origin.y
    if isinstance(glob, PixelBBox):
        return glob.translate(-dx, -dy)
    return PixelPoint(glob.x - dx, glob.y - dy)


def _nms_key(det):
    _, box, conf = det[:3]
    return (-conf, box.ymin, box.xmin, box.ymax, box.xmax)


def merge_detections(dets: Sequence, iou_threshold: float = 0.5) -> list:
    """Greedy per-class non-maximum suppression.

    ``dets`` items are ``(class, PixelBBox, confidence)`` tuples or objects with
    ``cls``/``bbox``/``confidence`` attributes; the same kind is returned,
    ordered by descending confidence.
    """
    def unpack(d):
        if isinstance(d, tuple):
            return d
        return (d.cls, d.bbox, d.confidence)

    order = sorted(range(len(dets)), key=lambda i: _nms_key(unpack(dets[i])))
    kept: dict = {}
    out = []
    for i in order:
        cls, box, _ = unpack(dets[i])
        same = kept.setdefault(cls, [])
        if all(box_iou(box, k) < iou_threshold for k in same):
            same.append(box)
            out.append(dets[i])
    return out
