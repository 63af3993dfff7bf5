"""Label mask to polygons and back.

Rings run along pixel edges (vertices at integer coordinates) with the
filled side on the left in the numeric (y-up) frame, so outer rings have
positive shoelace area and holes negative.  Where two pixels of a
component meet only at a corner the tracer turns left, keeping them apart
as 4-connectivity requires."""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..errors import ValidationError
from ..geometry import PixelPoint
from ..model import PolygonFeature, ring_signed_area
from .color import LabelMask

logger = logging.getLogger(__name__)

_FOUR = ndimage.generate_binary_structure(2, 1)

# unit steps: right, down, left, up (numeric frame)
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _boundary_edges(comp: np.ndarray) -> dict[tuple[int, int], list[int]]:
    """Directed boundary edges keyed by start vertex (x, y), value = step ids."""
    p = np.pad(comp, 1)
    inner = p[1:-1, 1:-1]
    out: dict[tuple[int, int], list[int]] = {}
    # top sides run +x, right sides +y, bottom sides -x, left sides -y
    sides = (
        (inner & ~p[:-2, 1:-1], 0, (0, 0)),
        (inner & ~p[1:-1, 2:], 1, (1, 0)),
        (inner & ~p[2:, 1:-1], 2, (1, 1)),
        (inner & ~p[1:-1, :-2], 3, (0, 1)),
    )
    for mask, step, (ox, oy) in sides:
        ys, xs = np.nonzero(mask)
        for x, y in zip((xs + ox).tolist(), (ys + oy).tolist()):
            out.setdefault((x, y), []).append(step)
    return out


def _next_step(outs: list[int], step: int) -> int:
    if len(outs) == 1:
        return outs[0]
    # saddle: prefer the left turn, then straight, then right
    for turn in (3, 0, 1):
        if (step + turn) % 4 in outs:
            return (step + turn) % 4
    raise ValidationError("boundary tracing reached a dead end")


def _trace_rings(comp: np.ndarray) -> list[list[tuple[int, int]]]:
    edges = _boundary_edges(comp)
    unused = {v: set(steps) for v, steps in edges.items()}
    rings = []
    while unused:
        start = next(iter(unused))
        first = min(unused[start])
        v, step = start, first
        ring = [start]
        while True:
            unused[v].discard(step)
            if not unused[v]:
                del unused[v]
            dx, dy = _DIRS[step]
            v = (v[0] + dx, v[1] + dy)
            ring.append(v)
            # the turn rule pairs edges deterministically, so the ring is
            # closed once it would leave the start along its first edge
            step = _next_step(edges[v], step)
            if v == start and step == first:
                break
        rings.append(_simplify(ring))
    return rings


def _simplify(ring: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop vertices where the direction does not change; keep closure."""
    pts = ring[:-1]
    n = len(pts)
    keep = []
    for i in range(n):
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        if (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) != 0:
            keep.append(b)
    keep.append(keep[0])
    return keep


def vectorize_mask(mask: LabelMask, connectivity: int = 4) -> list[PolygonFeature]:
    """One polygon per connected component of each label."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    if connectivity == 8:
        raise NotImplementedError("pixel-edge tracing supports 4-connectivity")
    polys = []
    m = np.asarray(mask.mask)
    for k, label in enumerate(mask.labels):
        comps, n = ndimage.label(m == k, structure=_FOUR)
        if n == 0:
            continue
        for idx, sl in enumerate(ndimage.find_objects(comps), start=1):
            comp = comps[sl] == idx
            oy, ox = sl[0].start, sl[1].start
            rings = [[PixelPoint(float(x + ox), float(y + oy)) for x, y in r] for r in _trace_rings(comp)]
            areas = [ring_signed_area(r) for r in rings]
            outers = [r for r, a in zip(rings, areas) if a > 0]
            holes = [r for r, a in zip(rings, areas) if a < 0]
            if len(outers) != 1:
                raise ValidationError(f"component of {label!r} traced to {len(outers)} outer rings")
            poly = PolygonFeature(label, outers[0], tuple(holes))
            if poly.area != int(comp.sum()):
                raise ValidationError("traced area differs from the component size")
            polys.append(poly)
    return polys


def _ring_fill(rings, height: int, width: int) -> np.ndarray:
    """Even-odd fill at pixel centres of the given closed rings."""
    out = np.zeros((height, width), dtype=bool)
    segs = []
    for ring in rings:
        pts = [tuple(p)[:2] for p in ring]
        if pts[0] != pts[-1]:
            pts.append(pts[0])
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            if y0 != y1:
                segs.append((x0, y0, x1, y1))
    if not segs:
        return out
    s = np.array(segs, dtype=float)
    ylo = max(0, int(math.floor(min(s[:, 1].min(), s[:, 3].min()))))
    yhi = min(height, int(math.ceil(max(s[:, 1].max(), s[:, 3].max()))))
    for r in range(ylo, yhi):
        yc = r + 0.5
        lo, hi = np.minimum(s[:, 1], s[:, 3]), np.maximum(s[:, 1], s[:, 3])
        act = s[(lo <= yc) & (yc < hi)]
        if len(act) == 0:
            continue
        xs = np.sort(act[:, 0] + (yc - act[:, 1]) * (act[:, 2] - act[:, 0]) / (act[:, 3] - act[:, 1]))
        for xa, xb in zip(xs[0::2], xs[1::2]):
            c0 = max(0, int(math.ceil(xa - 0.5)))
            c1 = min(width, int(math.ceil(xb - 0.5)))
            if c1 > c0:
                out[r, c0:c1] = True
    return out


def rasterize_polygons(polys: Sequence[PolygonFeature], labels: Sequence[str], height: int,
                       width: int) -> LabelMask:
    """Fill polygons back into a label mask (later polygons win overlaps)."""
    index = {l: i for i, l in enumerate(labels)}
    m = np.full((height, width), -1, dtype=np.int32)
    for p in polys:
        fill = _ring_fill((p.outer,) + p.holes, height, width)
        m[fill] = index[p.label]
    return LabelMask(m, tuple(labels))


def polygon_mask(poly: PolygonFeature, height: int, width: int) -> np.ndarray:
    return _ring_fill((poly.outer,) + poly.holes, height, width)
