import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mapdigit.errors import ValidationError
from mapdigit.evaluation import (
    GeorefCategory,
    aggregate_report,
    categorize_georef,
    densify,
    detection_f1,
    evaluate_georef,
    instance_ratios,
    iou_count,
    line_correct_complete,
    point_buffer,
    point_prf,
    pixel_iou_f1,
    rmse_geo,
    rmse_pixel_norm,
    weighted_aggregate,
)
from mapdigit.extract.color import LabelMask
from mapdigit.geometry import GeoPoint, PixelBBox, PixelPoint, affine_from_bbox, GeoBBox
from mapdigit.model import LineGraph


def brute_pixel(pred, gt):
    """Set-arithmetic oracle over explicit coordinate sets."""
    P = {(i, j) for i, j in zip(*np.nonzero(pred))}
    G = {(i, j) for i, j in zip(*np.nonzero(gt))}
    inter, union = len(P & G), len(P | G)
    if not union:
        return 1.0, 1.0, 1.0, 1.0
    p = inter / len(P) if P else 0.0
    r = inter / len(G) if G else 0.0
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return inter / union, f, p, r


# --- pixel metrics -----------------------------------------------------------

def test_identical_and_disjoint():
    a = np.zeros((10, 10), bool)
    a[2:5, 2:5] = True
    m = pixel_iou_f1(a, a)
    assert (m.iou, m.f1) == (1.0, 1.0)
    b = np.zeros_like(a)
    b[6:8, 6:8] = True
    m = pixel_iou_f1(a, b)
    assert (m.iou, m.f1) == (0.0, 0.0)


def test_half_overlap():
    a = np.zeros((4, 8), bool)
    b = np.zeros((4, 8), bool)
    a[:, 0:4] = True
    b[:, 2:6] = True
    m = pixel_iou_f1(a, b)
    assert m.iou == pytest.approx(1 / 3)
    assert m.f1 == pytest.approx(1 / 2)


def test_label_mask_selects_label():
    arr = np.array([[0, 0, 1], [1, -1, 0]], dtype=np.int32)
    lm = LabelMask(arr, ("a", "b"))
    m = pixel_iou_f1(lm, lm, label=1)
    assert m.iou == 1.0
    gt = np.array([[0, 1, 1], [1, -1, 0]], dtype=np.int32)
    m = pixel_iou_f1(arr, gt, label=1)
    assert m.precision == 1.0 and m.recall == pytest.approx(2 / 3)


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        pixel_iou_f1(np.zeros((2, 2), bool), np.zeros((3, 2), bool))


masks = st.integers(1, 64).flatmap(
    lambda h: st.integers(1, 64).flatmap(
        lambda w: st.tuples(st.integers(0, 2 ** 32 - 1), st.just((h, w)))))


@given(masks, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_pixel_matches_oracle(spec, fa, fb):
    seed, shape = spec
    rng = np.random.default_rng(seed)
    a = rng.random(shape) < fa
    b = rng.random(shape) < fb
    got = pixel_iou_f1(a, b)
    assert (got.iou, got.f1, got.precision, got.recall) == brute_pixel(a, b)


@given(masks)
def test_pixel_symmetry(spec):
    seed, shape = spec
    rng = np.random.default_rng(seed)
    a, b = rng.random(shape) < 0.5, rng.random(shape) < 0.5
    ab, ba = pixel_iou_f1(a, b), pixel_iou_f1(b, a)
    assert ab.iou == ba.iou
    assert ab.precision == ba.recall and ab.recall == ba.precision


# --- detection ---------------------------------------------------------------

def test_detection_exact():
    boxes = [PixelBBox(0, 0, 10, 10), PixelBBox(20, 20, 30, 30)]
    m = detection_f1(boxes, boxes)
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_detection_below_threshold():
    gt = [PixelBBox(0, 0, 10, 10)]
    # IoU = 40 / 100 under a shifted-but-contained layout
    pred = [PixelBBox(0, 0, 10, 4)]
    m = detection_f1(pred, gt)
    assert m.f1 == 0.0


def test_detection_greedy_two_on_one():
    gt = [PixelBBox(0, 0, 10, 10)]
    a = (PixelBBox(0, 0, 10, 9), 0.7)   # IoU 0.9
    b = (PixelBBox(0, 0, 10, 8), 0.9)   # IoU 0.8, higher confidence
    m = detection_f1([a, b], gt)
    assert m.precision == 0.5 and m.recall == 1.0
    # higher confidence claims the gt first
    assert m.iou == pytest.approx(0.8)


def test_detection_optimal_beats_greedy():
    gt = [PixelBBox(0, 0, 10, 10), PixelBBox(6, 0, 16, 10)]
    # first pred overlaps both; greedy gives it the best one and strands the second pred
    p1 = (PixelBBox(3, 0, 13, 10), 0.9)
    p2 = (PixelBBox(0, 0, 9, 10), 0.8)
    greedy = detection_f1([p1, p2], gt)
    best = detection_f1([p1, p2], gt, optimal=True)
    assert best.recall >= greedy.recall
    assert best.recall == 1.0


def test_detection_empty_sides():
    assert detection_f1([], []).f1 == 1.0
    assert detection_f1([PixelBBox(0, 0, 1, 1)], []).f1 == 0.0
    assert detection_f1([], [PixelBBox(0, 0, 1, 1)]).recall == 0.0


# --- polygon instance metrics ------------------------------------------------

def squares(n, size=16):
    out = []
    for k in range(n):
        m = np.zeros((size, size * n), bool)
        m[2:10, k * size + 2:k * size + 10] = True
        out.append(m)
    return out


def test_iou_count_examples():
    gt = squares(3)
    assert iou_count(gt, gt) == 3
    assert iou_count([], gt) == 3
    one = gt[0]
    left, right = one.copy(), one.copy()
    left[:, 6:] = False
    right[:, :6] = False
    assert iou_count([left, right], [one]) == 2


def test_iou_count_partial_cover():
    gt = squares(1)[0]
    pred = gt.copy()
    pred[2, 2] = False
    assert iou_count([pred], [gt]) == 2


def test_instance_ratios():
    gt = squares(4)
    m = instance_ratios(gt, gt)
    assert (m.cand_ratio, m.ex_gt_ratio, m.iou_count) == (1.0, 1.0, 4)
    frags = []
    for g in gt:
        ys, xs = np.nonzero(g)
        for k in range(3):
            f = np.zeros_like(g)
            sel = xs % 3 == k
            f[ys[sel], xs[sel]] = True
            frags.append(f)
    m = instance_ratios(frags, gt)
    assert m.cand_ratio == 3.0 and m.ex_gt_ratio == 3.0
    m = instance_ratios(gt[:2], gt)
    assert m.cand_ratio == 0.5 and m.ex_gt_ratio == 0.5
    with pytest.raises(ValidationError):
        instance_ratios(gt, [])


def test_weighted_aggregate():
    assert weighted_aggregate([{"f1": 0.0}, {"f1": 1.0}], [1, 3])["f1"] == 0.75
    assert weighted_aggregate([{"f1": 0.2}, {"f1": 0.4}], [2, 2])["f1"] == pytest.approx(0.3)
    assert weighted_aggregate([{"f1": 0.7}], [5])["f1"] == 0.7


def test_weighted_aggregate_zero_weights_warns(caplog):
    out = weighted_aggregate([{"f1": 0.0}, {"f1": 1.0}], [0, 0])
    assert out["f1"] == 0.5
    assert "unweighted" in caplog.text


def test_report_aggregates_by_iou_count():
    doc = aggregate_report({"b": {"f1": 1.0, "iou_count": 3}, "a": {"f1": 0.0, "iou_count": 1}})
    assert list(doc["maps"]) == ["a", "b"]
    assert doc["aggregate"] == {"f1": 0.75}


# --- lines -------------------------------------------------------------------

def test_lines_identical():
    line = [[(0, 0), (30, 0), (30, 40)]]
    m = line_correct_complete(line, line)
    assert (m.correctness, m.completeness) == (1.0, 1.0)


def test_lines_half():
    gt = [[(0, 0), (100, 0)]]
    pred = [[(0, 0), (50, 0)]]
    m = line_correct_complete(pred, gt, buffer_px=5)
    assert m.correctness == 1.0
    # gt pieces with midpoint x <= 55 are within 5 px of the pred end
    assert m.completeness == pytest.approx(0.55)
    m = line_correct_complete(pred, gt, buffer_px=0.4)
    assert m.completeness == pytest.approx(0.5)


def test_lines_far():
    m = line_correct_complete([[(0, 100), (50, 100)]], [[(0, 0), (50, 0)]])
    assert (m.correctness, m.completeness) == (0.0, 0.0)


def test_lines_accept_graphs():
    g = LineGraph([PixelPoint(0, 0), PixelPoint(10, 0)], [(0, 1)])
    assert line_correct_complete([g], [[(0, 0), (10, 0)]]).completeness == 1.0


def test_densify_preserves_length():
    segs = np.array([[0, 0, 3.5, 0], [0, 0, 3, 4]], float)
    mids, lens = densify(segs)
    assert math.fsum(lens) == pytest.approx(8.5)
    assert lens.max() <= 1.0


@given(st.integers(0, 10_000), st.sampled_from([1.0, 2.0, 4.0]))
def test_lines_scale_invariant(seed, k):
    rng = np.random.default_rng(seed)
    gt = [rng.integers(0, 60, size=(4, 2)).astype(float)]
    pred = [gt[0] + rng.normal(0, 3, size=(4, 2))]
    a = line_correct_complete(pred, gt, 5.0)
    b = line_correct_complete([p * k for p in pred], [g * k for g in gt], 5.0 * k)
    # densification differs between scales, so agreement is approximate
    assert a.correctness == pytest.approx(b.correctness, abs=0.1)
    assert a.completeness == pytest.approx(b.completeness, abs=0.1)


# --- points ------------------------------------------------------------------

def test_point_buffer_value():
    diag = math.hypot(10_000, 10_000)
    assert point_buffer(diag) == pytest.approx(2.8284, abs=1e-4)
    assert point_prf([PixelPoint(102, 100)], [PixelPoint(100, 100)], diag).f1 == 1.0
    assert point_prf([PixelPoint(104, 100)], [PixelPoint(100, 100)], diag).f1 == 0.0


def test_points_coincident():
    pts = [PixelPoint(i * 10, 5) for i in range(5)]
    m = point_prf(pts, pts, 1000)
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_points_greedy_one_to_one():
    gt = [PixelPoint(0, 0)]
    pred = [PixelPoint(1, 0), PixelPoint(0, 0)]
    m = point_prf(pred, gt, 1e5)
    assert m.precision == 0.5 and m.recall == 1.0


@given(st.lists(st.tuples(st.integers(0, 200), st.integers(0, 200)), max_size=12, unique=True),
       st.lists(st.tuples(st.integers(0, 200), st.integers(0, 200)), max_size=12, unique=True),
       st.sampled_from([2, 3, 10]))
def test_points_scale_invariant(a, b, k):
    pa = [PixelPoint(*p) for p in a]
    pb = [PixelPoint(*p) for p in b]
    m1 = point_prf(pa, pb, 20_000)
    m2 = point_prf([PixelPoint(p.x * k, p.y * k) for p in pa], [PixelPoint(p.x * k, p.y * k) for p in pb], 20_000 * k)
    assert m1 == m2


# --- georeferencing ----------------------------------------------------------

def test_rmse_geo_examples():
    pts = [GeoPoint(1, 2), GeoPoint(-3, 4)]
    assert rmse_geo(pts, pts) == 0.0
    R = 6371.0088
    assert rmse_geo([GeoPoint(0, 0)], [GeoPoint(1, 0)]) == pytest.approx(R * math.pi / 180, rel=1e-9)
    assert rmse_geo([GeoPoint(0, 0)], [GeoPoint(1, 0)]) == pytest.approx(111.195, abs=1e-3)
    # two pairs along the equator at 3 km and 4 km
    d3 = math.degrees(3 / R)
    d4 = math.degrees(4 / R)
    v = rmse_geo([GeoPoint(0, 0), GeoPoint(10, 0)], [GeoPoint(d3, 0), GeoPoint(10 + d4, 0)])
    assert v == pytest.approx(math.sqrt(12.5), rel=1e-9)


def test_rmse_errors():
    with pytest.raises(ValidationError):
        rmse_geo([], [])
    with pytest.raises(ValidationError):
        rmse_geo([GeoPoint(0, 0)], [])


def test_rmse_pixel_norm_examples():
    p = [PixelPoint(0, 0)]
    assert rmse_pixel_norm(p, p, 100) == 0.0
    assert rmse_pixel_norm([PixelPoint(3, 4)], [PixelPoint(0, 0)], 100) == pytest.approx(0.05)
    assert rmse_pixel_norm([PixelPoint(60, 80), PixelPoint(0, 100)], [PixelPoint(0, 0), PixelPoint(0, 0)], 100) == pytest.approx(1.0)


def test_categories():
    assert categorize_georef(0.05) is GeorefCategory.EXCELLENT
    assert categorize_georef(0.1) is GeorefCategory.GOOD
    assert categorize_georef(0.5) is GeorefCategory.GOOD
    assert categorize_georef(1.0) is GeorefCategory.FAIR


def test_evaluate_georef_exact_transform():
    h = affine_from_bbox(GeoBBox(-100.0, 40.0, -99.0, 41.0), 1000, 1000)
    px = [PixelPoint(0, 0), PixelPoint(1000, 0), PixelPoint(0, 1000), PixelPoint(500, 500)]
    geo = [GeoPoint(*tuple(h(p))) for p in px]
    m = evaluate_georef(h, px, geo, math.hypot(1000, 1000))
    assert m.rmse_geo == pytest.approx(0.0, abs=1e-9)
    assert m.rmse_pixel_norm == pytest.approx(0.0, abs=1e-9)
    assert m.category is GeorefCategory.EXCELLENT
