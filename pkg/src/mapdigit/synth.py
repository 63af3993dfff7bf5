"""Synthetic point-symbol training patches.

Basemaps are map content areas with known symbols painted out; templates are
rotated, rescaled and blurred, then pasted at random non-overlapping places,
with a small rendered number next to symbols that carry one (dip angles).

Every patch draws from its own generator seeded with ``(seed, index)`` so a
dataset can be produced in shards or in parallel with identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from .errors import SchemaError, UnreadableFileError, ValidationError
from .extract.points import POINT_CATALOG
from .geometry import PixelBBox, box_iou
from .model import MapLayout, RasterMap

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
RING_PX = 4
MASK_LEVEL = 128
INK = (25, 25, 25)

# 3x5 bitmap digits, rows top to bottom
_DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
}


@dataclass(frozen=True, eq=False)
class SymbolTemplate:
    """A symbol image (RGB) with its opacity mask, trimmed to the mask."""

    cls: str
    image: np.ndarray
    mask: np.ndarray
    needs_number: bool = False

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.uint8)
        mask = np.asarray(self.mask, dtype=bool)
        if img.ndim != 3 or img.shape[2] != 3 or img.shape[:2] != mask.shape:
            raise ValidationError(f"{self.cls}: image must be HxWx3 matching the mask")
        if not mask.any():
            raise ValidationError(f"{self.cls}: template mask is empty")
        ys, xs = np.nonzero(mask)
        sl = (slice(ys.min(), ys.max() + 1), slice(xs.min(), xs.max() + 1))
        object.__setattr__(self, "image", img[sl].copy())
        object.__setattr__(self, "mask", mask[sl].copy())

    @property
    def nominal_size(self) -> tuple[int, int]:
        """(width, height) in pixels."""
        return self.mask.shape[1], self.mask.shape[0]


def _ordered(name: str, lo: float, hi: float) -> None:
    if lo > hi:
        raise ValidationError(f"{name} range is not ordered: ({lo}, {hi})")


@dataclass(frozen=True)
class GenConfig:
    total_patches: int = 10_000
    patch_size: int = 1000
    rotation_deg: tuple[float, float] = (0.0, 360.0)
    scale: tuple[float, float] = (0.7, 1.3)
    blur_sigma: tuple[float, float] = (0.0, 1.5)
    max_symbols: int = 6
    max_overlap_iou: float = 0.05
    per_class_target: int = 3000
    seed: int = 0
    max_tries: int = 50

    def __post_init__(self):
        if self.total_patches < 1:
            raise ValidationError("total_patches must be >= 1")
        if self.patch_size < 8 or self.max_symbols < 1 or self.max_tries < 1:
            raise ValidationError("patch_size, max_symbols and max_tries must be positive")
        for name in ("rotation_deg", "scale", "blur_sigma"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            _ordered(name, lo, hi)
        if self.scale[0] <= 0 or self.blur_sigma[0] < 0:
            raise ValidationError("scale must be positive and blur non-negative")
        if not 0 <= self.max_overlap_iou <= 1:
            raise ValidationError("max_overlap_iou must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class SynthPatch:
    image: RasterMap
    annotations: list[tuple[str, PixelBBox]]
    masks: list[np.ndarray] = field(default_factory=list, repr=False)
    skipped_symbols: int = 0
    skipped_numbers: int = 0


# --- basemaps ----------------------------------------------------------------

def fill_region(pixels: np.ndarray, box: PixelBBox, ring: int = RING_PX) -> bool:
    """Fill ``box`` in place with the per-channel median of the ``ring``-px
    band around it (clipped to the image).  False when the band is empty."""
    h, w = pixels.shape[:2]
    x0, y0 = max(0, int(math.floor(box.xmin))), max(0, int(math.floor(box.ymin)))
    x1, y1 = min(w, int(math.ceil(box.xmax))), min(h, int(math.ceil(box.ymax)))
    if x0 >= x1 or y0 >= y1:
        return True
    ox0, oy0, ox1, oy1 = max(0, x0 - ring), max(0, y0 - ring), min(w, x1 + ring), min(h, y1 + ring)
    band = np.ones((oy1 - oy0, ox1 - ox0), dtype=bool)
    band[y0 - oy0:y1 - oy0, x0 - ox0:x1 - ox0] = False
    if not band.any():
        return False
    vals = pixels[oy0:oy1, ox0:ox1][band]
    pixels[y0:y1, x0:x1] = np.median(vals, axis=0).round().astype(pixels.dtype)
    return True


def make_basemaps(raster: RasterMap, layout: MapLayout, known_annotations: Sequence[PixelBBox] = ()) -> list[RasterMap]:
    """Content-area crop with every known symbol box painted out.  Ring
    medians are read from the unmodified crop."""
    content = raster.crop(layout.content_bbox, id=f"{raster.id}-base")
    src = content.pixels
    out = src.copy()
    dx, dy = layout.content_bbox.xmin, layout.content_bbox.ymin
    for box in known_annotations:
        local = box.translate(-dx, -dy)
        tmp = src.copy()
        if not fill_region(tmp, local):
            logger.warning("annotation %s has no surrounding ring inside the content area", box)
            continue
        x0, y0 = max(0, int(math.floor(local.xmin))), max(0, int(math.floor(local.ymin)))
        x1, y1 = min(out.shape[1], int(math.ceil(local.xmax))), min(out.shape[0], int(math.ceil(local.ymax)))
        out[y0:y1, x0:x1] = tmp[y0:y1, x0:x1]
    return [RasterMap(content.id, out)]


# --- rendering ---------------------------------------------------------------

def render_number(value: int, px: int = 2) -> np.ndarray:
    """Boolean ink mask for ``value`` (0..99) in the 3x5 font scaled by ``px``."""
    text = str(int(value))
    cols = []
    for i, ch in enumerate(text):
        glyph = np.array([[c == "1" for c in row] for row in _DIGITS[ch]])
        if i:
            cols.append(np.zeros((5, 1), dtype=bool))
        cols.append(glyph)
    return np.kron(np.hstack(cols), np.ones((px, px), dtype=bool))


def transform_symbol(t: SymbolTemplate, angle_deg: float, scale: float, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (RGBA uint8, mask) trimmed to the mask extent.  The mask is
    alpha >= 128 after resize, rotation and blur."""
    rgba = np.dstack([t.image, np.where(t.mask, 255, 0).astype(np.uint8)])
    im = Image.fromarray(rgba)
    w, h = t.nominal_size
    if scale != 1.0:
        im = im.resize((max(1, round(w * scale)), max(1, round(h * scale))), Image.BILINEAR)
    if angle_deg % 360 != 0:
        im = im.rotate(angle_deg, resample=Image.BILINEAR, expand=True)
    if sigma > 0:
        pad = int(math.ceil(3 * sigma))
        canvas = Image.new("RGBA", (im.width + 2 * pad, im.height + 2 * pad), (0, 0, 0, 0))
        canvas.paste(im, (pad, pad))
        im = canvas.filter(ImageFilter.GaussianBlur(sigma))
    arr = np.asarray(im)
    mask = arr[..., 3] >= MASK_LEVEL
    if not mask.any():
        # degenerate downscale; keep the strongest pixel
        mask = arr[..., 3] == arr[..., 3].max()
    ys, xs = np.nonzero(mask)
    sl = (slice(ys.min(), ys.max() + 1), slice(xs.min(), xs.max() + 1))
    return arr[sl], mask[sl]


def _composite(canvas: np.ndarray, rgba: np.ndarray, x: int, y: int) -> None:
    h, w = rgba.shape[:2]
    region = canvas[y:y + h, x:x + w].astype(np.float64)
    a = rgba[..., 3:4].astype(np.float64) / 255.0
    canvas[y:y + h, x:x + w] = np.rint(region * (1 - a) + rgba[..., :3] * a).astype(np.uint8)


def _window(basemap: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    h, w = basemap.shape[:2]
    if h < size or w < size:
        basemap = np.pad(basemap, ((0, max(0, size - h)), (0, max(0, size - w)), (0, 0)), mode="symmetric")
        h, w = basemap.shape[:2]
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return basemap[y:y + size, x:x + size].copy()


_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _place_number(canvas: np.ndarray, box: PixelBBox, rng: np.random.Generator) -> bool:
    value = int(rng.integers(0, 100))
    ink = render_number(value)
    gap = int(rng.integers(3, 11))
    first = int(rng.integers(0, 4))
    nh, nw = ink.shape
    size = canvas.shape[0]
    for k in range(4):
        dx, dy = _DIRECTIONS[(first + k) % 4]
        if dx > 0:
            x, y = int(box.xmax) + gap, int(box.ymin)
        elif dx < 0:
            x, y = int(box.xmin) - gap - nw, int(box.ymin)
        elif dy > 0:
            x, y = int(box.xmin), int(box.ymax) + gap
        else:
            x, y = int(box.xmin), int(box.ymin) - gap - nh
        if 0 <= x and 0 <= y and x + nw <= canvas.shape[1] and y + nh <= size:
            canvas[y:y + nh, x:x + nw][ink] = INK
            return True
    return False


def place_symbols(basemap: RasterMap, templates: Sequence[SymbolTemplate], cfg: GenConfig,
                  rng: np.random.Generator, patch_id: str = "patch") -> SynthPatch:
    """Paste ``templates`` (one symbol each, in order) onto a random window
    of ``basemap``.  Symbols that cannot be placed are skipped."""
    size = cfg.patch_size
    canvas = _window(basemap.pixels, size, rng)
    annotations: list[tuple[str, PixelBBox]] = []
    masks: list[np.ndarray] = []
    skipped = skipped_numbers = 0
    for t in templates:
        angle = float(rng.uniform(*cfg.rotation_deg)) if cfg.rotation_deg[0] < cfg.rotation_deg[1] else cfg.rotation_deg[0]
        scale = float(rng.uniform(*cfg.scale)) if cfg.scale[0] < cfg.scale[1] else cfg.scale[0]
        sigma = float(rng.uniform(*cfg.blur_sigma)) if cfg.blur_sigma[0] < cfg.blur_sigma[1] else cfg.blur_sigma[0]
        rgba, mask = transform_symbol(t, angle, scale, sigma)
        h, w = mask.shape
        if h > size or w > size:
            skipped += 1
            continue
        placed = None
        for _ in range(cfg.max_tries):
            x = int(rng.integers(0, size - w + 1))
            y = int(rng.integers(0, size - h + 1))
            box = PixelBBox(x, y, x + w, y + h)
            if all(box_iou(box, b) <= cfg.max_overlap_iou for _, b in annotations):
                placed = box
                break
        if placed is None:
            skipped += 1
            continue
        x, y = int(placed.xmin), int(placed.ymin)
        _composite(canvas, rgba, x, y)
        full = np.zeros((size, size), dtype=bool)
        full[y:y + h, x:x + w] = mask
        annotations.append((t.cls, placed))
        masks.append(full)
        if t.needs_number and not _place_number(canvas, placed, rng):
            skipped_numbers += 1
    return SynthPatch(RasterMap(patch_id, canvas), annotations, masks, skipped, skipped_numbers)


def mask_extent(mask: np.ndarray) -> PixelBBox:
    ys, xs = np.nonzero(mask)
    return PixelBBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


# --- scheduling and dataset ----------------------------------------------------

def schedule(n_classes: int, cfg: GenConfig) -> list[list[int]]:
    """Class indices per patch.

    ``S = min(n_classes * target, total * max_symbols)`` slots are spread
    evenly over the patches with classes assigned cyclically, so consecutive
    slots in a patch carry distinct classes whenever a patch holds at most
    ``n_classes`` slots."""
    if n_classes < 1:
        raise ValidationError("at least one symbol class is required")
    target = min(cfg.per_class_target, cfg.total_patches)
    slots = min(n_classes * target, cfg.total_patches * cfg.max_symbols)
    plan: list[list[int]] = [[] for _ in range(cfg.total_patches)]
    for j in range(slots):
        plan[j * cfg.total_patches // slots].append(j % n_classes)
    return plan


def _by_class(templates: Sequence[SymbolTemplate], catalog: Sequence[str]) -> tuple[list[str], dict[str, list[SymbolTemplate]]]:
    if not templates:
        raise ValidationError("template list is empty")
    groups: dict[str, list[SymbolTemplate]] = {}
    for t in templates:
        if t.cls not in catalog:
            raise ValidationError(f"template class {t.cls!r} is not in the catalog")
        groups.setdefault(t.cls, []).append(t)
    classes = [c for c in catalog if c in groups]
    return classes, groups


def annotation_lines(patch: SynthPatch, classes: Sequence[str], size: int) -> str:
    index = {c: i for i, c in enumerate(classes)}
    rows = []
    for cls, b in patch.annotations:
        cx, cy = (b.xmin + b.xmax) / 2 / size, (b.ymin + b.ymax) / 2 / size
        rows.append(f"{index[cls]} {cx:.6f} {cy:.6f} {b.width / size:.6f} {b.height / size:.6f}")
    return "".join(r + "\n" for r in rows)


def generate_patch(index: int, plan: list[int], basemaps: Sequence[RasterMap], classes: Sequence[str],
                   groups: dict[str, list[SymbolTemplate]], cfg: GenConfig) -> SynthPatch:
    rng = np.random.default_rng([cfg.seed, index])
    base = basemaps[int(rng.integers(0, len(basemaps)))]
    picks = []
    for ci in plan:
        options = groups[classes[ci]]
        picks.append(options[int(rng.integers(0, len(options)))])
    return place_symbols(base, picks, cfg, rng, patch_id=f"{index:05d}")


def _png_bytes(raster: RasterMap) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(raster.pixels).save(buf, format="PNG", compress_level=1)
    return buf.getvalue()


def generate_dataset(basemaps: Sequence[RasterMap], templates: Sequence[SymbolTemplate], cfg: GenConfig,
                     out_dir, catalog: Sequence[str] = POINT_CATALOG, indices: Optional[Iterable[int]] = None,
                     workers: int = 1) -> dict:
    """Write ``images/NNNNN.png``, ``labels/NNNNN.txt`` and ``manifest.json``.

    Label lines are ``class_index cx cy w h`` normalized to [0, 1].
    ``indices`` restricts output to a shard of the full schedule."""
    if not basemaps:
        raise ValidationError("at least one basemap is required")
    classes, groups = _by_class(templates, catalog)
    plan = schedule(len(classes), cfg)
    idx = list(range(cfg.total_patches)) if indices is None else sorted(set(indices))
    if idx and (idx[0] < 0 or idx[-1] >= cfg.total_patches):
        raise ValidationError("patch index outside the schedule")
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "labels").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnreadableFileError(f"cannot create dataset directory {out}: {exc}") from exc

    def work(i: int) -> tuple[dict, int, int]:
        patch = generate_patch(i, plan[i], basemaps, classes, groups, cfg)
        (out / "images" / f"{i:05d}.png").write_bytes(_png_bytes(patch.image))
        (out / "labels" / f"{i:05d}.txt").write_text(annotation_lines(patch, classes, cfg.patch_size))
        return {c for c, _ in patch.annotations}, patch.skipped_symbols, patch.skipped_numbers

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, idx))
    else:
        results = [work(i) for i in idx]
    counts = {c: 0 for c in classes}
    skipped = skipped_numbers = 0
    for present, s, sn in results:
        for c in present:
            counts[c] += 1
        skipped += s
        skipped_numbers += sn
    if skipped:
        logger.warning("skipped %d symbols that could not be placed", skipped)
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "classes": classes,
        "patches": len(idx),
        "per_class_patch_counts": counts,
        "skipped_symbols": skipped,
        "skipped_numbers": skipped_numbers,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# --- templates -----------------------------------------------------------------

def _draw_glyph(kind: int, size: int = 40) -> np.ndarray:
    """Distinct line-art glyphs for the default catalog."""
    im = Image.new("L", (size, size), 0)
    d = ImageDraw.Draw(im)
    c, r = size // 2, size // 2 - 3
    strike = [(3, c), (size - 4, c)]
    if kind in (0, 1, 4, 2):          # strike with dip tick
        d.line(strike, fill=255, width=3)
        d.line([(c, c), (c, c + r // 2 + 2)], fill=255, width=3)
        if kind == 1:
            d.polygon([(c - 5, c + r // 2), (c + 5, c + r // 2), (c, c + r)], fill=255)
        if kind == 4:
            d.ellipse([c - 4, c - 12, c + 4, c - 4], outline=255, width=2)
        if kind == 2:
            d.arc([c - 8, c - 8, c + 8, c + 8], 180, 360, fill=255, width=3)
    elif kind == 3:                   # lineation arrow
        d.line([(4, c), (size - 10, c)], fill=255, width=3)
        d.polygon([(size - 12, c - 7), (size - 3, c), (size - 12, c + 7)], fill=255)
    elif kind in (5, 7, 9):           # vertical: strike with crossing bar
        d.line(strike, fill=255, width=3)
        d.line([(c, c - r // 2), (c, c + r // 2)], fill=255, width=3)
        if kind == 7:
            d.polygon([(c - 5, c - r // 2 - 2), (c + 5, c - r // 2 - 2), (c, c - r // 2 + 6)], fill=255)
        if kind == 9:
            d.rectangle([c - 10, c - 3, c - 6, c + 3], fill=255)
    elif kind == 6:                   # horizontal bedding: cross in circle
        d.ellipse([4, 4, size - 5, size - 5], outline=255, width=3)
        d.line([(c, 8), (c, size - 9)], fill=255, width=3)
        d.line([(8, c), (size - 9, c)], fill=255, width=3)
    elif kind == 8:                   # joint: strike with open triangle
        d.line(strike, fill=255, width=3)
        d.polygon([(c - 6, c), (c + 6, c), (c, c + 10)], outline=255, width=2)
    elif kind == 10:                  # shaft: filled square
        d.rectangle([8, 8, size - 9, size - 9], fill=255)
    else:                             # prospect: crossed picks
        d.line([(6, 6), (size - 7, size - 7)], fill=255, width=4)
        d.line([(6, size - 7), (size - 7, 6)], fill=255, width=4)
    return np.asarray(im) >= MASK_LEVEL


def default_templates(catalog: Sequence[str] = POINT_CATALOG) -> list[SymbolTemplate]:
    """One procedural line-art template per catalog class; inclined and
    overturned attitudes carry a number."""
    out = []
    for k, cls in enumerate(catalog):
        mask = _draw_glyph(k % 12)
        img = np.zeros(mask.shape + (3,), dtype=np.uint8)
        img[:] = INK
        needs = cls.startswith(("inclined", "overturned")) or cls == "lineation"
        out.append(SymbolTemplate(cls, img, mask, needs))
    return out


def load_templates(catalog_path) -> list[SymbolTemplate]:
    """Read a CSV catalog with columns ``class,filename,needs_number``.
    Image alpha (or non-white pixels when opaque) defines the mask."""
    path = Path(catalog_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read template catalog {path}: {exc}") from exc
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or not {"class", "filename"} <= set(rows[0]):
        raise SchemaError(f"{path}: template catalog needs class and filename columns")
    out = []
    for row in rows:
        img_path = path.parent / row["filename"]
        try:
            im = Image.open(img_path)
            im.load()
        except OSError as exc:
            raise UnreadableFileError(f"cannot read template image {img_path}: {exc}") from exc
        if "A" in im.getbands():
            rgba = np.asarray(im.convert("RGBA"))
            mask = rgba[..., 3] >= MASK_LEVEL
        else:
            rgba = np.asarray(im.convert("RGB"))
            mask = rgba.min(axis=2) < 200
        needs = str(row.get("needs_number", "")).strip().lower() in {"1", "true", "yes", "y"}
        out.append(SymbolTemplate(row["class"], rgba[..., :3], mask, needs))
    return out
