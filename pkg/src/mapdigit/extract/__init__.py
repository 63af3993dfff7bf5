"""Classical feature-extraction baselines for polygons, lines and points."""

from .color import ColorSignature, LabelMask, extract_polygons_by_color, swatch_signature
from .lines import refine_line_graph
from .points import POINT_CATALOG, PointDetection, detect_points
from .polygons import rasterize_polygons, vectorize_mask
