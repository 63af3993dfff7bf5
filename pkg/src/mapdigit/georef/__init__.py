"""Georeferencing from corner coordinate labels, topographic-map retrieval
and visual keypoint matching."""

from .corners import CornerEstimate, CornerId, approx_corners, refine_corner, refine_corners
from .text import (
    Axis,
    GeoLabel,
    GeocoordValidation,
    assemble_gcps,
    corners_to_bbox_gcps,
    extract_title,
    georeference_text,
    labels_from_records,
    parse_coordinate_text,
    read_coordinate_labels,
    validate_geocoordinates,
)
from .topo import (
    TopoIndex,
    TopoRecord,
    extract_toponyms,
    load_topo_index,
    retrieve_topo_candidates,
    similarity,
    toponyms_via_client,
)
from .visual import (
    CandidateResult,
    RansacParams,
    georeference_visual,
    ransac_homography,
    score_and_select,
    select_candidates,
)
