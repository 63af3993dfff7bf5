"""Independent generators for test fixtures (no package internals)."""

import numpy as np

from mapdigit.clients import KeypointMatch
from mapdigit.geometry import PixelPoint
from mapdigit.model import RasterMap


def corner_fixture(rng, size=1000, specks=200, blank=False, thickness=3):
    """White raster with a neat-line corner (or full cross) of known crossing.

    Returns (raster, truth, approx)."""
    px = np.full((size, size, 3), 255, dtype=np.uint8)
    cx = int(rng.integers(300, size - 300))
    cy = int(rng.integers(300, size - 300))
    half = thickness // 2
    if not blank:
        # L corners keep their arms on the long side of the crossing, as a
        # neat line runs into the map body; shape 4 is a full cross
        shape = rng.integers(0, 5)
        left, up = cx > size // 2, cy > size // 2
        xs = slice(0, cx + half + 1) if left else slice(cx - half, size)
        ys = slice(0, cy + half + 1) if up else slice(cy - half, size)
        if shape == 4:
            xs, ys = slice(0, size), slice(0, size)
        px[cy - half:cy + half + 1, xs] = 0
        px[ys, cx - half:cx + half + 1] = 0
    for _ in range(specks if not blank else 0):
        w, h = rng.integers(1, 6, size=2)
        x, y = rng.integers(0, size - 6, size=2)
        px[y:y + h, x:x + w] = rng.integers(0, 80)
    approx = PixelPoint(float(cx + rng.integers(-40, 41)), float(cy + rng.integers(-40, 41)))
    return RasterMap("corner", px), PixelPoint(float(cx), float(cy)), approx


def random_homography(rng, scale=1000.0):
    """A well-conditioned homography on [0, scale]^2."""
    h = np.eye(3)
    h[:2, :2] = rng.uniform(0.7, 1.3) * np.array([[1, 0], [0, 1]]) + rng.normal(0, 0.08, (2, 2))
    h[:2, 2] = rng.uniform(-100, 100, 2)
    h[2, :2] = rng.normal(0, 1e-4, 2)
    return h


def apply_h(h, pts):
    ph = np.c_[pts, np.ones(len(pts))] @ h.T
    return ph[:, :2] / ph[:, 2:]


def planted_matches(rng, h, n_in=20, n_out=10, scale=1000.0, conf=0.9):
    src = rng.uniform(0, scale, (n_in, 2))
    dst = apply_h(h, src)
    ms = [KeypointMatch(PixelPoint(*s), PixelPoint(*d), conf) for s, d in zip(src, dst)]
    for _ in range(n_out):
        ms.append(KeypointMatch(PixelPoint(*rng.uniform(0, scale, 2)), PixelPoint(*rng.uniform(0, scale, 2)), conf))
    order = rng.permutation(len(ms))
    return [ms[i] for i in order], src
