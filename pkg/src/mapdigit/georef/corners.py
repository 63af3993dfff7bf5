"""Map-content corner refinement.

Around an approximate corner, the neat line (the frame around the map
content) shows up as one near-horizontal and one near-vertical dark line.
We binarize with Otsu, clean specks with a 3x3 opening/closing, find the
strongest line of each family with a Hough accumulator, and intersect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import ndimage

from ..geometry import PixelBBox, PixelPoint
from ..model import RasterMap

DEFAULT_WINDOW = 1000
ANGLE_TOLERANCE_DEG = 5
MIN_VOTE_FRACTION = 0.4
# Minimum gray-level spread for a window to be considered to contain ink.
MIN_CONTRAST = 32
# Line work is a small share of a window; a larger dark class means Otsu
# split paper from area fills, so the dark class is thresholded again.
MAX_INK_FRACTION = 0.2
MAX_RETHRESHOLD = 3


class CornerId(str, Enum):
    NW = "NW"
    NE = "NE"
    SW = "SW"
    SE = "SE"


@dataclass(frozen=True)
class CornerEstimate:
    corner_id: CornerId
    approx: PixelPoint
    refined: Optional[PixelPoint] = None

    def __post_init__(self):
        object.__setattr__(self, "corner_id", CornerId(self.corner_id))

    @property
    def point(self) -> PixelPoint:
        return self.refined if self.refined is not None else self.approx


def approx_corners(content: PixelBBox) -> dict[CornerId, PixelPoint]:
    return {
        CornerId.NW: PixelPoint(content.xmin, content.ymin),
        CornerId.NE: PixelPoint(content.xmax, content.ymin),
        CornerId.SW: PixelPoint(content.xmin, content.ymax),
        CornerId.SE: PixelPoint(content.xmax, content.ymax),
    }


def otsu_threshold(gray: np.ndarray) -> Optional[float]:
    """Otsu's threshold on an 8-bit image; None when the image is flat."""
    g = np.clip(gray, 0, 255).astype(np.uint8)
    hist = np.bincount(g.ravel(), minlength=256).astype(float)
    total = hist.sum()
    levels = np.arange(256, dtype=float)
    w0 = np.cumsum(hist)
    w1 = total - w0
    m0 = np.cumsum(hist * levels)
    mt = m0[-1]
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return None
    between = np.zeros(256)
    mu0 = m0[valid] / w0[valid]
    mu1 = (mt - m0[valid]) / w1[valid]
    between[valid] = w0[valid] * w1[valid] * (mu0 - mu1) ** 2
    return float(np.argmax(between))


def binarize(gray: np.ndarray) -> np.ndarray:
    """Dark-ink mask after Otsu thresholding and 3x3 opening then closing."""
    if gray.size == 0 or float(gray.max()) - float(gray.min()) < MIN_CONTRAST:
        return np.zeros(gray.shape, dtype=bool)
    t = otsu_threshold(gray)
    if t is None:
        return np.zeros(gray.shape, dtype=bool)
    ink = gray <= t
    for _ in range(MAX_RETHRESHOLD):
        if ink.mean() <= MAX_INK_FRACTION:
            break
        dark = gray[ink]
        if float(dark.max()) - float(dark.min()) < MIN_CONTRAST:
            break
        t = otsu_threshold(dark)
        if t is None:
            break
        ink = gray <= t
    se = np.ones((3, 3), dtype=bool)
    ink = ndimage.binary_opening(ink, structure=se)
    ink = ndimage.binary_closing(ink, structure=se)
    return ink


@dataclass(frozen=True)
class HoughLine:
    theta_deg: float  # angle of the line normal
    rho: float        # x cos(theta) + y sin(theta) = rho
    votes: int


def strongest_line(ink: np.ndarray, thetas_deg, min_votes: float) -> Optional[HoughLine]:
    """Best line among ``thetas_deg`` (1 px rho bins).  The peak rho is
    refined to the vote-weighted centre of the contiguous band of bins with
    at least half the peak votes, so thick strokes resolve to their centre."""
    ys, xs = np.nonzero(ink)
    if len(xs) == 0:
        return None
    h, w = ink.shape
    rmax = int(math.ceil(math.hypot(h, w))) + 1
    best = None
    for t in thetas_deg:
        th = math.radians(t)
        rho = np.rint(xs * math.cos(th) + ys * math.sin(th)).astype(np.int64) + rmax
        acc = np.bincount(rho, minlength=2 * rmax + 1)
        peak = int(acc.argmax())
        votes = int(acc[peak])
        if best is None or votes > best[2]:
            best = (t, acc, votes, peak)
    t, acc, votes, peak = best
    if votes < min_votes:
        return None
    half = 0.5 * votes
    lo = peak
    while lo > 0 and acc[lo - 1] >= half:
        lo -= 1
    hi = peak
    while hi + 1 < len(acc) and acc[hi + 1] >= half:
        hi += 1
    bins = np.arange(lo, hi + 1)
    rho = float((bins * acc[lo:hi + 1]).sum() / acc[lo:hi + 1].sum()) - rmax
    return HoughLine(float(t), rho, votes)


def intersect(a: HoughLine, b: HoughLine) -> Optional[tuple[float, float]]:
    ta, tb = math.radians(a.theta_deg), math.radians(b.theta_deg)
    m = np.array([[math.cos(ta), math.sin(ta)], [math.cos(tb), math.sin(tb)]])
    if abs(np.linalg.det(m)) < 1e-9:
        return None
    x, y = np.linalg.solve(m, [a.rho, b.rho])
    return float(x), float(y)


def window_bounds(raster: RasterMap, center: PixelPoint, window: int) -> tuple[int, int, int, int]:
    half = window // 2
    cx, cy = int(round(center.x)), int(round(center.y))
    x0, y0 = max(0, cx - half), max(0, cy - half)
    x1, y1 = min(raster.width, cx - half + window), min(raster.height, cy - half + window)
    return x0, y0, x1, y1


def refine_corner(raster: RasterMap, approx: PixelPoint, window: int = DEFAULT_WINDOW) -> PixelPoint:
    """Intersection of the strongest near-horizontal and near-vertical lines
    in a ``window``-sized square around ``approx``; ``approx`` if either
    line is missing."""
    x0, y0, x1, y1 = window_bounds(raster, approx, window)
    if x1 <= x0 or y1 <= y0:
        return approx
    gray = raster.gray()[y0:y1, x0:x1] if raster.pixels.size <= 4 * window * window \
        else _gray_window(raster, x0, y0, x1, y1)
    ink = binarize(gray)
    min_votes = MIN_VOTE_FRACTION * min(x1 - x0, y1 - y0)
    tol = ANGLE_TOLERANCE_DEG
    horizontal = strongest_line(ink, range(90 - tol, 90 + tol + 1), min_votes)
    vertical = strongest_line(ink, range(-tol, tol + 1), min_votes)
    if horizontal is None or vertical is None:
        return approx
    hit = intersect(horizontal, vertical)
    if hit is None:
        return approx
    lx, ly = hit
    if not (0 <= lx < x1 - x0 and 0 <= ly < y1 - y0):
        return approx
    return PixelPoint(x0 + lx, y0 + ly)


def _gray_window(raster: RasterMap, x0, y0, x1, y1) -> np.ndarray:
    p = raster.pixels[y0:y1, x0:x1].astype(np.float32)
    return 0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2]


def refine_corners(raster: RasterMap, content: PixelBBox, window: int = DEFAULT_WINDOW) -> list[CornerEstimate]:
    return [CornerEstimate(cid, p, refine_corner(raster, p, window))
            for cid, p in approx_corners(content).items()]
