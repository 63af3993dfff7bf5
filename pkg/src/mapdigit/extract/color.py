"""Colour signatures from legend swatches and nearest-signature pixel labelling.

Conversions are the standard ones: sRGB to HSV, CIELAB (D65 white) and
YUV (BT.601).  All components are then scaled so each space's Euclidean
distance lies in [0, 1]; hue is compared on the circle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ValidationError
from ..geometry import PixelBBox
from ..model import LegendItem, RasterMap

logger = logging.getLogger(__name__)

DEFAULT_MAX_DISTANCE = 0.12
INNER_FRACTION = 0.6
SPACES = ("rgb", "hsv", "lab", "yuv")

_D65 = np.array([0.95047, 1.0, 1.08883])
_RGB_TO_XYZ = np.array([[0.4124564, 0.3575761, 0.1804375],
                        [0.2126729, 0.7151522, 0.0721750],
                        [0.0193339, 0.1191920, 0.9503041]])
_RGB_TO_YUV = np.array([[0.299, 0.587, 0.114],
                        [-0.14713, -0.28886, 0.436],
                        [0.615, -0.51499, -0.10001]])
_U_MAX, _V_MAX = 0.436, 0.615


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) RGB in [0, 1] to HSV with hue in [0, 1)."""
    rgb = np.asarray(rgb, dtype=float)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx, mn = rgb.max(axis=-1), rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(mx == r, ((g - b) / safe) % 6.0,
                 np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(delta > 0, h / 6.0, 0.0) % 1.0
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx], axis=-1)


def _srgb_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """(..., 3) sRGB in [0, 1] to CIELAB (D65)."""
    xyz = _srgb_linear(np.asarray(rgb, dtype=float)) @ _RGB_TO_XYZ.T / _D65
    eps, kappa = 216 / 24389, 24389 / 27
    f = np.where(xyz > eps, np.cbrt(xyz), (kappa * xyz + 16) / 116)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def rgb_to_yuv(rgb: np.ndarray) -> np.ndarray:
    return np.asarray(rgb, dtype=float) @ _RGB_TO_YUV.T


@dataclass(frozen=True)
class ColorSignature:
    label: str
    rgb: tuple[float, float, float]  # 0..255
    hsv: tuple[float, float, float]  # h in [0, 1), s, v in [0, 1]
    lab: tuple[float, float, float]
    yuv: tuple[float, float, float]

    def __post_init__(self):
        for name in SPACES:
            v = getattr(self, name)
            if len(v) != 3 or not all(math.isfinite(c) for c in v):
                raise ValidationError(f"{name} signature must be 3 finite values")

    @classmethod
    def from_rgb(cls, label: str, rgb) -> "ColorSignature":
        rgb = np.asarray(rgb, dtype=float)
        unit = rgb / 255.0
        tup = lambda a: tuple(float(c) for c in a)
        return cls(label, tup(rgb), tup(rgb_to_hsv(unit)), tup(rgb_to_lab(unit)), tup(rgb_to_yuv(unit)))


def inner_region(box: PixelBBox, fraction: float = INNER_FRACTION) -> PixelBBox:
    """Central ``fraction`` of the box per axis, shrunk to whole pixels."""
    trim = (1.0 - fraction) / 2.0
    x0 = math.ceil(round(box.xmin + trim * box.width, 9))
    x1 = math.floor(round(box.xmax - trim * box.width, 9))
    y0 = math.ceil(round(box.ymin + trim * box.height, 9))
    y1 = math.floor(round(box.ymax - trim * box.height, 9))
    if x1 <= x0 or y1 <= y0:
        raise ValidationError(f"swatch {box.as_tuple()} has no pixels after trimming")
    return PixelBBox(x0, y0, x1, y1)


def swatch_signature(raster: RasterMap, item: LegendItem) -> ColorSignature:
    inner = inner_region(item.swatch_bbox)
    patch = raster.crop(inner).pixels.reshape(-1, 3).astype(float)
    if len(patch) == 0:
        raise ValidationError(f"swatch of {item.label!r} lies outside the raster")
    return ColorSignature.from_rgb(item.label, patch.mean(axis=0))


# Per-component scale so every in-gamut distance lies in [0, 1].
_SCALE = {
    "rgb": np.array([1.0, 1.0, 1.0]),
    "hsv": np.array([2.0, 1.0, 1.0]),  # circular hue difference is at most 0.5
    "lab": np.array([1 / 100.0, 1 / 255.0, 1 / 255.0]),
    "yuv": np.array([1.0, 1 / (2 * _U_MAX), 1 / (2 * _V_MAX)]),
}


def space_distances(unit_rgb: np.ndarray, sig: ColorSignature) -> dict[str, np.ndarray]:
    """Scaled Euclidean distance from each (n, 3) unit-RGB colour to ``sig``, per space."""
    unit_rgb = np.asarray(unit_rgb, dtype=float).reshape(-1, 3)
    diffs = {
        "rgb": unit_rgb - np.asarray(sig.rgb) / 255.0,
        "hsv": rgb_to_hsv(unit_rgb) - np.asarray(sig.hsv),
        "lab": rgb_to_lab(unit_rgb) - np.asarray(sig.lab),
        "yuv": rgb_to_yuv(unit_rgb) - np.asarray(sig.yuv),
    }
    dh = np.abs(diffs["hsv"][:, 0])
    diffs["hsv"][:, 0] = np.minimum(dh, 1.0 - dh)
    root3 = math.sqrt(3.0)
    return {k: np.sqrt(((d * _SCALE[k]) ** 2).sum(axis=1)) / root3 for k, d in diffs.items()}


def combined_distance(unit_rgb: np.ndarray, sig: ColorSignature) -> np.ndarray:
    """Mean of the four per-space distances."""
    d = space_distances(unit_rgb, sig)
    return sum(d[k] for k in SPACES) / len(SPACES)


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel legend index (-1 for none) plus the legend labels."""

    mask: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ValidationError("label mask must be 2-D")
        if m.size and (m.min() < -1 or m.max() >= len(self.labels)):
            raise ValidationError("label mask index out of range")
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


def extract_polygons_by_color(content: RasterMap, signatures: Sequence[ColorSignature],
                              max_distance: float = DEFAULT_MAX_DISTANCE) -> LabelMask:
    """Assign every pixel to the nearest signature (lowest index on ties),
    or to none when even the nearest is beyond ``max_distance``.

    Distances are computed once per distinct colour."""
    if not signatures:
        raise ValidationError("no colour signatures given")
    px = content.pixels.reshape(-1, 3)
    packed = (px[:, 0].astype(np.uint32) << 16) | (px[:, 1].astype(np.uint32) << 8) | px[:, 2]
    colours, inverse = np.unique(packed, return_inverse=True)
    rgb = np.stack([(colours >> 16) & 255, (colours >> 8) & 255, colours & 255], axis=1) / 255.0
    dist = np.stack([combined_distance(rgb, s) for s in signatures], axis=1)
    best = np.argmin(dist, axis=1)  # first minimum = lowest legend index
    best = np.where(dist[np.arange(len(best)), best] <= max_distance, best, -1)
    mask = best[inverse.ravel()].reshape(content.height, content.width).astype(np.int32)
    for i in range(len(signatures)):
        for j in range(i + 1, len(signatures)):
            if np.allclose(signatures[i].rgb, signatures[j].rgb, atol=1.0):
                logger.warning("legend items %r and %r share a colour; %r wins",
                               signatures[i].label, signatures[j].label, signatures[i].label)
    return LabelMask(mask, tuple(s.label for s in signatures))
