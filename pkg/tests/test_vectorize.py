import struct

import numpy as np
import pytest
from scipy import ndimage

from campseg.errors import NonBinaryInput
from campseg.raster import RasterGrid, GeoTransform
from campseg.vectorize import (PolygonFeature, shoelace, simplify,
                               trace_polygons, write_shapefile,
                               _point_segment_dist)

from shp_reader import read_dbf, read_shp, read_shx

GT = GeoTransform(100.0, 200.0, 0.5, -0.5)


def as_mask(arr):
    return RasterGrid(np.asarray(arr, dtype=np.uint8) * 255)


def test_single_pixel_square():
    feats = trace_polygons(as_mask([[1]]), GT)
    assert len(feats) == 1
    f = feats[0]
    assert f.outer_ring == ((100.0, 200.0), (100.5, 200.0), (100.5, 199.5),
                            (100.0, 199.5), (100.0, 200.0))
    assert abs(f.area - 0.25) < 1e-12
    assert f.pixel_count == 1
    assert f.holes == ()


def test_empty_mask():
    assert trace_polygons(as_mask(np.zeros((4, 4))), GT) == []


def test_ring_with_hole():
    m = [[1, 1, 1],
         [1, 0, 1],
         [1, 1, 1]]
    feats = trace_polygons(as_mask(m), GT)
    assert len(feats) == 1
    f = feats[0]
    assert len(f.holes) == 1
    assert f.pixel_count == 8
    # area = 9 outer cells minus 1 hole cell, at 0.25 world units each
    assert abs(f.area - 8 * 0.25) < 1e-12
    assert shoelace(f.outer_ring) < 0      # outer clockwise
    assert shoelace(f.holes[0]) > 0        # hole counter-clockwise


def test_non_binary_rejected():
    with pytest.raises(NonBinaryInput):
        trace_polygons(RasterGrid(np.array([[3]], dtype=np.uint8)), GT)


def test_diagonal_touch_is_two_features():
    m = [[1, 0],
         [0, 1]]
    feats = trace_polygons(as_mask(m), GT)
    assert len(feats) == 2  # 4-connectivity separates the diagonal pair


def test_saddle_background_stays_outside():
    # bg pocket touches outside diagonally -> 8-connected bg -> not a hole
    m = [[0, 1, 1],
         [1, 0, 1],
         [1, 1, 1]]
    feats = trace_polygons(as_mask(m), GT)
    assert len(feats) == 1
    assert feats[0].holes == ()
    assert feats[0].pixel_count == 7
    assert abs(feats[0].area - 7 * 0.25) < 1e-12


def test_pixel_count_and_area_conservation_property():
    rng = np.random.default_rng(11)
    for case in range(100):
        h, w = int(rng.integers(2, 24)), int(rng.integers(2, 24))
        m = (rng.random((h, w)) > 0.55).astype(np.uint8)
        feats = trace_polygons(as_mask(m), GT)
        total_px = sum(f.pixel_count for f in feats)
        assert total_px == int(m.sum()), f"case {case}"
        area = sum(f.area for f in feats)
        want = total_px * abs(GT.pixel_width * GT.pixel_height)
        if want:
            assert abs(area - want) <= 1e-9 * want, f"case {case}"
        else:
            assert area == 0.0
        for f in feats:
            assert shoelace(f.outer_ring) < 0
            assert f.outer_ring[0] == f.outer_ring[-1]
            for hole in f.holes:
                assert shoelace(hole) > 0
                assert hole[0] == hole[-1]


def test_component_count_matches_labeling_oracle():
    rng = np.random.default_rng(12)
    for _ in range(30):
        m = (rng.random((16, 16)) > 0.6).astype(np.uint8)
        feats = trace_polygons(as_mask(m), GT)
        _, n = ndimage.label(m)  # 4-connectivity
        assert len(feats) == n


# -- simplification -----------------------------------------------------------

def square_feature():
    return trace_polygons(as_mask([[1]]), GT)[0]


def test_simplify_tolerance_zero_identity():
    f = square_feature()
    assert simplify(f, 0.0) is f


def test_simplify_removes_collinear():
    # rectangle 3 wide, 1 tall: long edges carry collinear midpoints only if
    # we build them by hand
    ring = ((0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (3.0, -1.0),
            (0.0, -1.0), (0.0, 0.0))
    f = PolygonFeature(outer_ring=ring, holes=(), feature_id=1, area=3.0,
                       pixel_count=3)
    out = simplify(f, 1e-9)
    assert (1.0, 0.0) not in out.outer_ring
    assert (2.0, 0.0) not in out.outer_ring
    assert out.outer_ring[0] == out.outer_ring[-1]
    assert abs(shoelace(out.outer_ring)) == abs(shoelace(ring))


def test_simplify_respects_tolerance_property():
    rng = np.random.default_rng(13)
    for _ in range(25):
        h, w = int(rng.integers(3, 16)), int(rng.integers(3, 16))
        m = (rng.random((h, w)) > 0.4).astype(np.uint8)
        feats = trace_polygons(as_mask(m), GT)
        tol = float(rng.uniform(0.05, 0.6))
        for f in feats:
            s = simplify(f, tol)
            kept = s.outer_ring
            # every original vertex stays within tol of the simplified ring
            for p in f.outer_ring:
                d = min(_point_segment_dist(p, kept[i], kept[i + 1])
                        for i in range(len(kept) - 1))
                assert d <= tol + 1e-9


def test_simplify_degenerate_returns_original():
    f = square_feature()
    out = simplify(f, 1e9)  # everything within tolerance -> would collapse
    assert out == f


# -- shapefile ----------------------------------------------------------------

def test_unit_square_read_back(tmp_path):
    f = square_feature()
    base = str(tmp_path / "one")
    write_shapefile([f], 'PROJCS["x"]', base)
    shape_type, bbox, records = read_shp(base + ".shp")
    assert shape_type == 5
    assert len(records) == 1
    assert len(records[0].rings) == 1
    assert len(records[0].rings[0]) == 5
    assert bbox == (100.0, 199.5, 100.5, 200.0)
    fields, rows = read_dbf(base + ".dbf")
    assert [x[0] for x in fields] == ["id", "area", "px_count"]
    assert rows[0]["id"] == 1 and rows[0]["px_count"] == 1
    assert abs(rows[0]["area"] - 0.25) < 1e-9
    assert open(base + ".prj").read() == 'PROJCS["x"]'


def test_empty_feature_set(tmp_path):
    base = str(tmp_path / "none")
    write_shapefile([], None, base)
    shape_type, bbox, records = read_shp(base + ".shp")
    assert records == [] and shape_type == 5
    _, rows = read_dbf(base + ".dbf")
    assert rows == []
    import os
    assert not os.path.exists(base + ".prj")


def test_file_code_bytes(tmp_path):
    base = str(tmp_path / "code")
    write_shapefile([square_feature()], None, base)
    blob = open(base + ".shp", "rb").read()
    assert blob[:4] == bytes([0x00, 0x00, 0x27, 0x0A])  # 9994 big-endian
    (version,) = struct.unpack_from("<i", blob, 28)
    assert version == 1000


def test_shx_offsets_consistent(tmp_path):
    rng = np.random.default_rng(14)
    m = (rng.random((12, 12)) > 0.5).astype(np.uint8)
    feats = trace_polygons(as_mask(m), GT)
    base = str(tmp_path / "many")
    write_shapefile(feats, None, base)
    entries = read_shx(base + ".shx")
    blob = open(base + ".shp", "rb").read()
    assert len(entries) == len(feats)
    for i, (off_words, len_words) in enumerate(entries):
        rec_no, content_words = struct.unpack_from(">2i", blob, off_words * 2)
        assert rec_no == i + 1
        assert content_words == len_words


def test_round_trip_features(tmp_path):
    m = [[1, 1, 1, 0],
         [1, 0, 1, 0],
         [1, 1, 1, 1]]
    feats = trace_polygons(as_mask(m), GT)
    base = str(tmp_path / "rt")
    write_shapefile(feats, None, base)
    _, _, records = read_shp(base + ".shp")
    assert len(records) == len(feats)
    for f, rec in zip(feats, records):
        rings = [tuple((x, y) for x, y in ring) for ring in rec.rings]
        assert rings[0] == f.outer_ring
        assert tuple(rings[1:]) == f.holes


def test_deterministic_bytes(tmp_path):
    feats = trace_polygons(as_mask([[1, 0], [1, 1]]), GT)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    write_shapefile(feats, "CRS", a)
    write_shapefile(feats, "CRS", b)
    for ext in (".shp", ".shx", ".dbf", ".prj"):
        assert open(a + ext, "rb").read() == open(b + ext, "rb").read()
