"""Standalone shapefile reader used only by the test suite.

Parses .shp/.shx/.dbf byte layouts directly from the published ESRI format
description, sharing no code with the writer under test: big-endian file
code 9994 and record headers, little-endian version/shape data, 16-bit-word
offsets, dBase III attribute table.
"""

import struct


class ShpPolygon:
    def __init__(self, rings, bbox):
        self.rings = rings
        self.bbox = bbox


def read_shp(path):
    data = open(path, "rb").read()
    (code,) = struct.unpack_from(">i", data, 0)
    assert code == 9994, f"bad file code {code}"
    (file_words,) = struct.unpack_from(">i", data, 24)
    assert file_words * 2 == len(data), "header length disagrees with file size"
    version, shape_type = struct.unpack_from("<2i", data, 28)
    assert version == 1000
    bbox = struct.unpack_from("<4d", data, 36)
    pos = 100
    records = []
    while pos < len(data):
        rec_no, content_words = struct.unpack_from(">2i", data, pos)
        pos += 8
        end = pos + content_words * 2
        (stype,) = struct.unpack_from("<i", data, pos)
        assert stype == shape_type == 5
        rbox = struct.unpack_from("<4d", data, pos + 4)
        n_parts, n_points = struct.unpack_from("<2i", data, pos + 36)
        parts = struct.unpack_from(f"<{n_parts}i", data, pos + 44)
        pts_off = pos + 44 + 4 * n_parts
        pts = [struct.unpack_from("<2d", data, pts_off + 16 * i) for i in range(n_points)]
        rings = []
        for k in range(n_parts):
            a = parts[k]
            b = parts[k + 1] if k + 1 < n_parts else n_points
            rings.append(pts[a:b])
        records.append(ShpPolygon(rings, rbox))
        pos = end
    return shape_type, bbox, records


def read_shx(path):
    data = open(path, "rb").read()
    (code,) = struct.unpack_from(">i", data, 0)
    assert code == 9994
    entries = []
    pos = 100
    while pos < len(data):
        off, length = struct.unpack_from(">2i", data, pos)
        entries.append((off, length))
        pos += 8
    return entries


def read_dbf(path):
    data = open(path, "rb").read()
    assert data[0] == 0x03
    (n_records,) = struct.unpack_from("<I", data, 4)
    header_size, record_size = struct.unpack_from("<2H", data, 8)
    fields = []
    pos = 32
    while data[pos] != 0x0D:
        name = data[pos:pos + 11].rstrip(b"\x00").decode("ascii")
        ftype = chr(data[pos + 11])
        width = data[pos + 16]
        decimals = data[pos + 17]
        fields.append((name, ftype, width, decimals))
        pos += 32
    rows = []
    pos = header_size
    for _ in range(n_records):
        assert data[pos:pos + 1] == b" "
        cursor = pos + 1
        row = {}
        for name, ftype, width, decimals in fields:
            raw = data[cursor:cursor + width].decode("ascii").strip()
            row[name] = float(raw) if decimals else int(raw)
            cursor += width
        rows.append(row)
        pos += record_size
    return fields, rows
