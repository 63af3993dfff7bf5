"""Map layout analysis: in-context-learning prompts for legend pairs, and
content/legend segmentation (through a model client or an ink-density
fallback)."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import MalformedDocumentError, SchemaError
from .geometry import PixelBBox
from .io import layout_from_dict
from .model import FeatureKind, LegendItem, MapLayout, RasterMap

logger = logging.getLogger(__name__)

PLACEHOLDER = "??"
DEFAULT_N_EXAMPLES = 15
BIN_PX = 16
DENSITY_FRACTION = 0.25
INK_LEVEL = 200

INSTRUCTION = (
    "You are given two images of map legend areas. The first image is an annotated "
    "example; the second is the query. A legend entry consists of a legend item "
    "(the symbol or colour swatch) and its description text. Each bounding box is "
    "[x1, y1, x2, y2] in pixel coordinates of the full map sheet. Using the labelled "
    "example entries as a guide, replace every \"??\" in the query entries with the "
    "bounding boxes of the legend items and descriptions found in the query image. "
    "Add one query entry per legend entry. Return only JSON with the same structure."
)


@dataclass(frozen=True)
class IclExample:
    image_ref: str
    pairs: tuple[tuple[PixelBBox, PixelBBox], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))


@dataclass(frozen=True)
class IclPrompt:
    instruction: str
    example_image: str
    examples: tuple[dict, ...]
    query_region: tuple[float, float, float, float]
    query_entries: tuple[dict, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "task": self.instruction,
            "example": {"image": self.example_image, "entries": [dict(e) for e in self.examples]},
            "query": {"region": list(self.query_region), "entries": [dict(e) for e in self.query_entries]},
        }

    def render(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def parse(cls, text: str) -> "IclPrompt":
        doc = _load_structured(text)
        try:
            return cls(
                doc["task"],
                doc["example"]["image"],
                tuple(doc["example"]["entries"]),
                tuple(doc["query"]["region"]),
                tuple(doc["query"]["entries"]),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedDocumentError(f"not an ICL prompt: {exc}") from exc


def _box(b: PixelBBox) -> list[float]:
    return [b.xmin, b.ymin, b.xmax, b.ymax]


def placeholder_entry() -> dict:
    return {"legend_item": [PLACEHOLDER] * 4, "description": [PLACEHOLDER] * 4}


def build_icl_prompt(example: IclExample, query_legend_bbox: PixelBBox,
                     n_examples: int = DEFAULT_N_EXAMPLES, n_query: int = 1) -> IclPrompt:
    """Prompt with the task instruction, up to ``n_examples`` annotated pairs
    (clamped to what the example offers) and ``n_query`` placeholder entries."""
    n = max(0, min(n_examples, len(example.pairs)))
    examples = tuple({"legend_item": _box(item), "description": _box(desc)}
                     for item, desc in example.pairs[:n])
    query = tuple(placeholder_entry() for _ in range(n_query))
    return IclPrompt(INSTRUCTION, example.image_ref, examples, tuple(_box(query_legend_bbox)), query)


_FENCE = re.compile(r"```(?:json|JSON)?\s*(.*?)```", re.S)


def _load_structured(text: str):
    m = _FENCE.search(text)
    body = m.group(1) if m else text
    try:
        return json.loads(body.strip())
    except ValueError as exc:
        raise MalformedDocumentError(f"response is not JSON: {exc}") from exc


class IclParseResult(NamedTuple):
    pairs: list[tuple[PixelBBox, PixelBBox]]
    dropped: int
    extras: list[dict]


def _numeric_box(v) -> Optional[list[float]]:
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        return None
    if any(isinstance(c, bool) or not isinstance(c, (int, float)) for c in v):
        return None
    return [float(c) for c in v]


def _clip(coords: list[float], region: PixelBBox) -> PixelBBox:
    x1, y1, x2, y2 = coords
    box = PixelBBox(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))
    return box.clip(region)


def parse_icl_response(text: str, legend_bbox: PixelBBox) -> IclParseResult:
    """Extract answered query entries, clipped to ``legend_bbox``.

    Accepts a bare list of entries, ``{"entries": [...]}``, or a full prompt
    echo with ``query.entries``; fenced code blocks are unwrapped first.
    Entries still holding placeholders (or otherwise non-numeric) are dropped.
    """
    doc = _load_structured(text)
    if isinstance(doc, dict):
        if isinstance(doc.get("query"), dict):
            doc = doc["query"].get("entries", [])
        elif "entries" in doc:
            doc = doc["entries"]
        elif "query" in doc:
            doc = doc["query"]
    if not isinstance(doc, list):
        raise MalformedDocumentError("response holds no list of entries")
    pairs, extras, dropped = [], [], 0
    for entry in doc:
        if not isinstance(entry, dict):
            dropped += 1
            continue
        item = _numeric_box(entry.get("legend_item"))
        desc = _numeric_box(entry.get("description"))
        if item is None or desc is None:
            dropped += 1
            continue
        pairs.append((_clip(item, legend_bbox), _clip(desc, legend_bbox)))
        extras.append({k: v for k, v in entry.items() if k not in ("legend_item", "description")})
    return IclParseResult(pairs, dropped, extras)


def extract_legend_items(raster: RasterMap, layout: MapLayout, client, example: IclExample,
                         n_examples: int = DEFAULT_N_EXAMPLES) -> list[LegendItem]:
    """Ask ``client`` for legend-item/description pairs in every legend region."""
    items = []
    for r_i, region in enumerate(layout.legend_region_bboxes):
        prompt = build_icl_prompt(example, region, n_examples)
        text = client.complete("legend_pairs", prompt.instruction, prompt.render(),
                               [raster.crop(region, f"{raster.id}")])
        result = parse_icl_response(text, region)
        if result.dropped:
            logger.info("legend region %d: dropped %d unanswered entries", r_i, result.dropped)
        for p_i, ((item, desc), extra) in enumerate(zip(result.pairs, result.extras)):
            label = str(extra.get("label") or f"legend_{r_i}_{p_i}")
            kind = extra.get("kind", "polygon")
            try:
                kind = FeatureKind(kind)
            except ValueError:
                kind = FeatureKind.POLYGON
            items.append(LegendItem(label, kind, item, desc, str(extra.get("description_text", ""))))
    return items


# --- segmentation -----------------------------------------------------------

def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) runs of True values."""
    runs, start = [], None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def _bin_density(ink: np.ndarray, axis: int, bin_px: int) -> np.ndarray:
    prof = ink.sum(axis=axis).astype(float)
    n = int(np.ceil(len(prof) / bin_px))
    padded = np.zeros(n * bin_px)
    padded[: len(prof)] = prof
    counts = np.full(n, bin_px, dtype=float)
    counts[-1] = len(prof) - (n - 1) * bin_px
    return padded.reshape(n, bin_px).sum(axis=1) / (counts * ink.shape[axis])


def _largest_dense_run(density: np.ndarray) -> Optional[tuple[int, int]]:
    peak = density.max() if density.size else 0.0
    if peak <= 0:
        return None
    runs = _runs(density >= DENSITY_FRACTION * peak)
    # widest run wins; earliest on ties
    return max(runs, key=lambda r: (r[1] - r[0], -r[0]))


def _ink_bbox(ink: np.ndarray, x0: int, y0: int) -> Optional[PixelBBox]:
    ys, xs = np.nonzero(ink)
    if len(xs) == 0:
        return None
    return PixelBBox(x0 + int(xs.min()), y0 + int(ys.min()), x0 + int(xs.max()) + 1, y0 + int(ys.max()) + 1)


def fallback_segmentation(raster: RasterMap, bin_px: int = BIN_PX) -> MapLayout:
    """Split the sheet by ink density: the widest dense column band (then the
    tallest dense row band inside it) is the content; ink to the right of or
    below it forms legend regions."""
    ink = raster.gray() < INK_LEVEL
    h, w = ink.shape
    col_run = _largest_dense_run(_bin_density(ink, 0, bin_px))
    if col_run is None:
        return MapLayout(raster.bounds)
    x0, x1 = col_run[0] * bin_px, min(col_run[1] * bin_px, w)
    row_run = _largest_dense_run(_bin_density(ink[:, x0:x1], 1, bin_px))
    y0, y1 = row_run[0] * bin_px, min(row_run[1] * bin_px, h)
    content = PixelBBox(x0, y0, x1, y1)
    legends = []
    right = _ink_bbox(ink[:, x1:], x1, 0)
    if right is not None:
        legends.append(right)
    below = _ink_bbox(ink[y1:, :x1], 0, y1)
    if below is not None:
        legends.append(below)
    return MapLayout(content, tuple(legends))


def segment_layout(raster: RasterMap, client=None) -> MapLayout:
    """Layout from ``client`` when given (task ``layout``), else the fallback.

    Client errors propagate; the caller (usually an orchestrator task) fails.
    """
    if client is None:
        return fallback_segmentation(raster)
    text = client.complete("layout", "Segment the map sheet into its content area, legend "
                           "regions and title. Return JSON with content_bbox, legend_regions, "
                           "title_bbox and items.", "", [raster])
    doc = _load_structured(text)
    if not isinstance(doc, dict):
        raise MalformedDocumentError("layout response must be a JSON object")
    try:
        return layout_from_dict(doc)
    except SchemaError as exc:
        raise MalformedDocumentError(str(exc)) from exc
