"""mapdigit: geologic map digitization toolkit.

Georeferencing from corner labels or topographic-map matching, classical
polygon/line/point extraction baselines, synthetic training data, metric
evaluation and a small DAG orchestrator tying them into jobs.
"""

from .errors import GatingRejectedError, MapDigitError, ValidationError
from .geometry import (
    GeoBBox,
    GeoPoint,
    GroundControlPoint,
    Homography,
    PixelBBox,
    PixelPoint,
    fit_homography,
    geodesic_distance,
)
from .model import GcpSet, MapLayout, RasterMap, VectorFeatureSet

__version__ = "0.1.0"

__all__ = [
    "GatingRejectedError", "MapDigitError", "ValidationError",
    "GeoBBox", "GeoPoint", "GroundControlPoint", "Homography", "PixelBBox", "PixelPoint",
    "fit_homography", "geodesic_distance",
    "GcpSet", "MapLayout", "RasterMap", "VectorFeatureSet",
]
