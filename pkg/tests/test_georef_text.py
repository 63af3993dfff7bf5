import functools
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapdigit.clients import StubModelClient
from mapdigit.errors import DegenerateBBoxError, EmptyTitleError, MissingCornerError, UnparseableTextError
from mapdigit.geometry import GeoBBox, PixelBBox, PixelPoint
from mapdigit.georef import (
    CornerEstimate,
    GeoLabel,
    TopoIndex,
    TopoRecord,
    assemble_gcps,
    corners_to_bbox_gcps,
    extract_title,
    extract_toponyms,
    georeference_text,
    load_topo_index,
    parse_coordinate_text,
    refine_corner,
    retrieve_topo_candidates,
    similarity,
    validate_geocoordinates,
)
from mapdigit.georef.corners import approx_corners
from mapdigit.model import MapLayout, RasterMap

from synth_fixtures import corner_fixture


def unit_corners(refined=True):
    pts = {"NW": (0, 0), "NE": (1, 0), "SW": (0, 1), "SE": (1, 1)}
    return [CornerEstimate(k, PixelPoint(*v), PixelPoint(*v) if refined else None) for k, v in pts.items()]


def geo_of(gcps):
    return [(g.geo.lon, g.geo.lat) for g in gcps.gcps]


class TestRefineCorner:
    def test_crossing(self):
        px = np.full((1000, 1000, 3), 255, np.uint8)
        px[479:482, :] = 0
        px[:, 619:622] = 0
        got = refine_corner(RasterMap("m", px), PixelPoint(600, 500))
        assert math.hypot(got.x - 620, got.y - 480) <= 2

    def test_blank(self):
        r = RasterMap("m", np.full((800, 800, 3), 255, np.uint8))
        assert refine_corner(r, PixelPoint(400, 300)) == PixelPoint(400, 300)

    def test_with_specks(self):
        rng = np.random.default_rng(7)
        px = np.full((1000, 1000, 3), 255, np.uint8)
        px[479:482, :] = 0
        px[:, 619:622] = 0
        for _ in range(200):
            w, h = rng.integers(1, 6, size=2)
            x, y = rng.integers(0, 994, size=2)
            px[y:y + h, x:x + w] = 0
        got = refine_corner(RasterMap("m", px), PixelPoint(600, 500))
        assert math.hypot(got.x - 620, got.y - 480) <= 2

    @pytest.mark.parametrize("fill", [(222, 196, 150), (150, 190, 230), (170, 170, 170)])
    def test_area_fill_inside_neatline(self, fill):
        # a mid-gray unit fill covering the map side must not be taken as ink
        px = np.full((1000, 1000, 3), 255, np.uint8)
        px[480:, 620:] = fill
        px[479:482, 619:] = 0
        px[479:, 619:622] = 0
        got = refine_corner(RasterMap("m", px), PixelPoint(590, 450))
        assert math.hypot(got.x - 620, got.y - 480) <= 0.5

    def test_single_family_falls_back(self):
        px = np.full((600, 600, 3), 255, np.uint8)
        px[299:302, :] = 0
        assert refine_corner(RasterMap("m", px), PixelPoint(310, 280)) == PixelPoint(310, 280)

    def test_window_clipped_at_edge(self):
        px = np.full((400, 400, 3), 255, np.uint8)
        px[19:22, :] = 0
        px[:, 29:32] = 0
        got = refine_corner(RasterMap("m", px), PixelPoint(10, 10), window=200)
        assert math.hypot(got.x - 30, got.y - 20) <= 2

    @settings(max_examples=15)
    @given(st.integers(0, 10_000))
    def test_random_fixtures(self, seed):
        raster, truth, approx = corner_fixture(np.random.default_rng(seed), size=700)
        got = refine_corner(raster, approx, window=600)
        assert math.hypot(got.x - truth.x, got.y - truth.y) <= 2


class TestParse:
    @pytest.mark.parametrize("text,value", [
        ("34°", 34.0), ("117.5", 117.5), ("117.5°", 117.5), ("117°30′", 117.5),
        ("117°30'", 117.5), ("34°30'N", 34.5), ("-33.25", -33.25), ("S 12°", -12.0),
    ])
    def test_values(self, text, value):
        assert parse_coordinate_text(text)[0] == pytest.approx(value, abs=1e-12)

    def test_dms_west(self):
        v, axis = parse_coordinate_text("117°30′15″W")
        assert v == pytest.approx(-(117 + 30 / 60 + 15 / 3600), abs=1e-12)
        assert axis.value == "lon"

    def test_hint(self):
        assert parse_coordinate_text("34°N")[1].value == "lat"
        assert parse_coordinate_text("34")[1] is None

    @pytest.mark.parametrize("bad", ["", "abc", "34°75′", "N34°S", "12.5°30′"])
    def test_unparseable(self, bad):
        with pytest.raises(UnparseableTextError):
            parse_coordinate_text(bad)

    @given(st.integers(0, 179), st.integers(0, 59), st.integers(0, 59), st.sampled_from("NSEW"))
    def test_dms_oracle(self, d, m, s, hemi):
        v, _ = parse_coordinate_text(f"{d}°{m}′{s}″{hemi}")
        expected = (d * 3600 + m * 60 + s) / 3600
        assert v == pytest.approx(-expected if hemi in "SW" else expected, abs=1e-12)


CORNER_ANCHORS = {"NW": (0, 0), "NE": (1000, 0), "SW": (0, 800), "SE": (1000, 800)}


def corner_labels(lats, lons, jitter=((0, 20), (20, 0))):
    """Eight labels, one lat and one lon per corner."""
    out = []
    for (name, (x, y)), la, lo in zip(CORNER_ANCHORS.items(), lats, lons):
        out.append(GeoLabel(str(la), la, "lat", PixelPoint(x + jitter[0][0], y + jitter[0][1])))
        out.append(GeoLabel(str(lo), lo, "lon", PixelPoint(x + jitter[1][0], y + jitter[1][1])))
    return out


class TestValidate:
    def test_accept(self):
        v = validate_geocoordinates(corner_labels([34.5, 34.5, 34.0, 34.0], [-117.5, -117.0, -117.5, -117.0]))
        assert v.accepted and v.lats == (34.0, 34.5) and v.lons == (-117.5, -117.0)

    def test_wrong_count(self):
        labels = corner_labels([34.5, 34.5, 34.0, 34.0], [-117.5, -117.0, -117.5, -117.0])[:7]
        assert validate_geocoordinates(labels).reason == "wrong-count"

    def test_wrong_uniques(self):
        v = validate_geocoordinates(corner_labels([34.5, 34.2, 34.0, 34.0], [-117.5, -117.0, -117.5, -117.0]))
        assert v.reason == "wrong-uniques"

    def test_bad_distribution(self):
        labels = corner_labels([34.5, 34.5, 34.0, 34.0], [-117.5, -117.0, -117.5, -117.0])
        # move the NE longitude label to the SW corner
        moved = [l if not (l.axis.value == "lon" and l.anchor.x > 500 and l.anchor.y < 400)
                 else GeoLabel(l.text, l.value, l.axis, PixelPoint(5, 790)) for l in labels]
        assert validate_geocoordinates(moved).reason == "bad-corner-distribution"

    @given(st.permutations(range(8)))
    def test_permutation_invariant(self, perm):
        labels = corner_labels([34.5, 34.5, 34.0, 34.0], [-117.5, -117.0, -117.5, -117.0])
        bad = corner_labels([34.5, 34.1, 34.0, 34.0], [-117.5, -117.0, -117.5, -117.0])
        assert validate_geocoordinates([labels[i] for i in perm]) == validate_geocoordinates(labels)
        assert validate_geocoordinates([bad[i] for i in perm]) == validate_geocoordinates(bad)


class TestAssemble:
    def test_pairing(self):
        g = assemble_gcps(unit_corners(), {34, 35}, {-118, -117})
        assert geo_of(g) == [(-118, 35), (-117, 35), (-118, 34), (-117, 34)]
        assert [tuple(p.pixel) for p in g.gcps] == [(0, 0), (1, 0), (0, 1), (1, 1)]

    def test_eastern(self):
        g = assemble_gcps(unit_corners(), {48, 47}, {11, 10})
        nw, ne, sw, se = g.gcps
        assert nw.geo.lon == 10 and sw.geo.lon == 10 and ne.geo.lon == 11

    def test_missing_corner(self):
        with pytest.raises(MissingCornerError):
            assemble_gcps(unit_corners()[:3], {34, 35}, {-118, -117})

    @given(st.floats(-80, 80), st.floats(0.01, 5), st.floats(-170, 170), st.floats(0.01, 5))
    def test_orientation_property(self, lat, dlat, lon, dlon):
        g = assemble_gcps(unit_corners(), {lat, lat + dlat}, {lon, lon + dlon})
        nw, ne, sw, se = g.gcps
        assert nw.geo.lat == ne.geo.lat and sw.geo.lat == se.geo.lat
        assert nw.geo.lon == sw.geo.lon and ne.geo.lon == se.geo.lon
        assert nw.geo.lat > sw.geo.lat  # lat decreases as y increases
        for p in g.gcps:
            q = g.homography(p.pixel)
            assert q.x == pytest.approx(p.geo.lon, abs=1e-9) and q.y == pytest.approx(p.geo.lat, abs=1e-9)


def record(id="r1", name="Nazareth", state="PA", county="Northampton", bbox=(-118, 34, -117, 35)):
    return TopoRecord(id, name, state, county, GeoBBox(*bbox), 24000)


class TestBBoxGcps:
    def test_same_as_assemble(self):
        assert geo_of(corners_to_bbox_gcps(unit_corners(), record())) == \
            geo_of(assemble_gcps(unit_corners(), {34, 35}, {-118, -117}))

    def test_degenerate(self):
        with pytest.raises(DegenerateBBoxError):
            corners_to_bbox_gcps(unit_corners(), record(bbox=(-118, 34, -118, 35)))

    def test_approx_fallback(self):
        g = corners_to_bbox_gcps(unit_corners(refined=False), record())
        assert [tuple(p.pixel) for p in g.gcps] == [(0, 0), (1, 0), (0, 1), (1, 1)]


@functools.lru_cache(maxsize=None)
def lev_oracle(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(lev_oracle(a[1:], b) + 1, lev_oracle(a, b[1:]) + 1, lev_oracle(a[1:], b[1:]) + (a[0] != b[0]))


class TestRetrieval:
    def index(self):
        return TopoIndex([record("r1"), record("r2", "Easton", bbox=(-117, 34, -116, 35)),
                          record("r3", "Bangor", county="Northampton", bbox=(-116, 34, -115, 35))])

    def test_exact(self):
        (rec, score), *_ = retrieve_topo_candidates(["Nazareth"], self.index(), 5)
        assert rec.id == "r1" and score == 1.0

    def test_normalized(self):
        assert similarity("NAZARETH quad.", "Nazareth") > 0.9

    def test_unrelated(self):
        idx = TopoIndex([record("x", "Bowling Green", "OH", "Wood")])
        assert retrieve_topo_candidates(["Mountain Top Mercury Deposit"], idx, 5) == []

    def test_ties_by_id(self):
        idx = TopoIndex([record("b"), record("a")])
        assert [r.id for r, _ in retrieve_topo_candidates(["Nazareth"], idx, 5)] == ["a", "b"]

    def test_limit_and_order(self):
        res = retrieve_topo_candidates(["Nazareth", "Northampton"], self.index(), 2)
        assert len(res) == 2 and res[0][0].id == "r1"
        assert res[0][1] >= res[1][1]

    @given(st.text(alphabet="abcdefgh", min_size=1, max_size=8), st.text(alphabet="abcdefgh", min_size=1, max_size=8))
    def test_similarity_oracle(self, a, b):
        assert similarity(a, b) == pytest.approx(1 - lev_oracle(a, b) / max(len(a), len(b)), abs=1e-12)

    @given(st.text(alphabet="abcdefgh ", min_size=1, max_size=10), st.text(alphabet="abcdefgh", min_size=1, max_size=8),
           st.sampled_from([str.upper, str.title, lambda s: s + ".", lambda s: "," + s.replace(" ", "-")]))
    def test_symmetric_in_case_and_punctuation(self, a, b, f):
        assert similarity(f(a), b) == similarity(a, b)

    def test_load_csv(self, tmp_path):
        p = tmp_path / "idx.csv"
        p.write_text("id,quadrangle_name,state,county,min_lon,min_lat,max_lon,max_lat,scale\n"
                     "q1,Nazareth,PA,Northampton,-75.375,40.625,-75.25,40.75,24000\n"
                     "q2,Easton,PA,,-75.25,40.625,-75.125,40.75,\n")
        idx = load_topo_index(p)
        assert len(idx) == 2 and idx["q2"].county is None and idx["q1"].scale == 24000
        assert [r.id for r in idx.by_name("NAZARETH")] == ["q1"]

    def test_toponyms(self):
        t = "Geologic Map of the Nazareth Quadrangle, Northampton County, Pennsylvania"
        assert extract_toponyms(t) == ["Nazareth", "Northampton", "Pennsylvania"]
        assert extract_toponyms("Bedrock geology of West Virginia") == ["West Virginia"]


class TestTitle:
    def test_fixed(self, tmp_path):
        (tmp_path / "title.txt").write_text("Geologic Map of the Nazareth Quadrangle")
        r = RasterMap("m", np.zeros((4, 4, 3), np.uint8))
        assert extract_title(r, StubModelClient(tmp_path)) == "Geologic Map of the Nazareth Quadrangle"

    def test_multiline(self, tmp_path):
        (tmp_path / "title.txt").write_text("\n  \n  First line  \nsecond\n")
        r = RasterMap("m", np.zeros((4, 4, 3), np.uint8))
        assert extract_title(r, StubModelClient(tmp_path)) == "First line"

    def test_empty(self, tmp_path):
        (tmp_path / "title.txt").write_text("")
        r = RasterMap("m", np.zeros((4, 4, 3), np.uint8))
        with pytest.raises(EmptyTitleError):
            extract_title(r, StubModelClient(tmp_path))


def test_text_pipeline():
    px = np.full((900, 1100, 3), 255, np.uint8)
    x0, y0, x1, y1 = 100, 80, 1000, 820
    for y in (y0, y1):
        px[y - 1:y + 2, x0 - 1:x1 + 2] = 0
    for x in (x0, x1):
        px[y0 - 1:y1 + 2, x - 1:x + 2] = 0
    raster = RasterMap("m", px)
    layout = MapLayout(PixelBBox(x0 + 12, y0 - 9, x1 - 7, y1 + 11))
    labels = [GeoLabel("", la, "lat", PixelPoint(ax + (-30 if ax < 500 else 30), ay))
              for (ax, ay), la in zip([(x0, y0), (x1, y0), (x0, y1), (x1, y1)], [35, 35, 34, 34])]
    labels += [GeoLabel("", lo, "lon", PixelPoint(ax, ay + (-20 if ay < 400 else 20)))
               for (ax, ay), lo in zip([(x0, y0), (x1, y0), (x0, y1), (x1, y1)], [-118, -117, -118, -117])]
    res = georeference_text(raster, layout, labels, window=300)
    assert res.gcps is not None
    got = {c.corner_id.value: c.refined for c in res.corners}
    assert math.hypot(got["NW"].x - x0, got["NW"].y - y0) <= 2
    assert math.hypot(got["SE"].x - x1, got["SE"].y - y1) <= 2
    q = res.gcps.homography(PixelPoint((x0 + x1) / 2, (y0 + y1) / 2))
    assert q.x == pytest.approx(-117.5, abs=1e-2) and q.y == pytest.approx(34.5, abs=1e-2)
    assert res.report()["accepted"]
