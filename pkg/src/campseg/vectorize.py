"""Binary mask -> georeferenced polygons -> ESRI Shapefile.

Tracing walks pixel edges exactly (no smoothing): foreground components are
4-connected, enclosed background pockets become holes under the
complementary 8-connected rule, which falls out of resolving saddle
vertices with a right-turn preference. Rings are closed; outer rings are
written clockwise (negative shoelace), holes counter-clockwise, per the
Shapefile polygon convention.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateRing, IoFailure, NonBinaryInput
from .raster import RasterGrid, GeoTransform

# fixed .dbf date stamp so emitted bytes are reproducible
DBF_DATE = (120, 1, 1)  # 2020-01-01


@dataclass(frozen=True)
class PolygonFeature:
    outer_ring: tuple[tuple[float, float], ...]
    holes: tuple[tuple[tuple[float, float], ...], ...]
    feature_id: int
    area: float
    pixel_count: int


def shoelace(ring) -> float:
    """Signed area; positive for counter-clockwise vertex order."""
    s = 0.0
    for (x0, y0), (x1, y1) in zip(ring, ring[1:]):
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _orient(ring, clockwise: bool):
    a = shoelace(ring)
    if (a < 0) == clockwise:
        return tuple(ring)
    return tuple(reversed(ring))


_RIGHT_OF = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}
_LEFT_OF = {v: k for k, v in _RIGHT_OF.items()}


def _component_rings(comp_mask: np.ndarray, r0: int, c0: int):
    """Closed pixel-corner loops bounding one component.

    comp_mask is a tight boolean window; r0/c0 anchor it in the full mask.
    Saddle vertices take the right turn, which keeps diagonally-touching
    background outside the polygon (8-connected background rule).
    """
    h, w = comp_mask.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = comp_mask
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    rows, cols = np.nonzero(comp_mask)
    for r, c in zip(rows, cols):
        pr, pc = r + 1, c + 1
        if not padded[pr - 1, pc]:
            _add_edge(edges, (c, r), (c + 1, r))          # top, eastward
        if not padded[pr, pc + 1]:
            _add_edge(edges, (c + 1, r), (c + 1, r + 1))  # right, southward
        if not padded[pr + 1, pc]:
            _add_edge(edges, (c + 1, r + 1), (c, r + 1))  # bottom, westward
        if not padded[pr, pc - 1]:
            _add_edge(edges, (c, r + 1), (c, r))          # left, northward

    rings = []
    while edges:
        start = min(edges)
        prev_dir = None
        ring = [start]
        cur = start
        while True:
            outs = edges[cur]
            if len(outs) == 1 or prev_dir is None:
                nxt = outs.pop(0)
            else:
                # saddle: prefer the right turn relative to the incoming direction
                want = _RIGHT_OF[prev_dir]
                pick = 0
                for i, cand in enumerate(outs):
                    d = (cand[0] - cur[0], cand[1] - cur[1])
                    if d == want:
                        pick = i
                        break
                nxt = outs.pop(pick)
            if not edges[cur]:
                del edges[cur]
            prev_dir = (nxt[0] - cur[0], nxt[1] - cur[1])
            ring.append(nxt)
            cur = nxt
            if cur == start:
                break
        rings.append(_merge_collinear(ring, r0, c0))
    return rings


def _add_edge(edges, a, b):
    edges.setdefault(a, []).append(b)


def _merge_collinear(ring, r0, c0):
    """Drop interior vertices of straight runs; shift into full-mask coords."""
    out = []
    n = len(ring) - 1  # last repeats first
    for i in range(n):
        px, py = ring[i - 1]
        cx, cy = ring[i]
        nx, ny = ring[(i + 1) % n]
        if (cx - px, cy - py) != (nx - cx, ny - cy):
            out.append((cx + c0, cy + r0))
    out.append(out[0])
    return out


def trace_polygons(mask: RasterGrid, gt: GeoTransform) -> list[PolygonFeature]:
    """One feature per 4-connected foreground component, holes included."""
    plane = mask.pixels[:, :, 0]
    vals = set(int(v) for v in np.unique(plane))
    if not vals.issubset({0, 255}):
        raise NonBinaryInput(f"mask holds values other than 0/255: {sorted(vals)[:8]}")
    fg = plane == 255
    labels, n = ndimage.label(fg)  # default structure = 4-connectivity
    features = []
    slices = ndimage.find_objects(labels)
    for comp_id in range(1, n + 1):
        sl = slices[comp_id - 1]
        comp = labels[sl] == comp_id
        pixel_count = int(comp.sum())
        rings_px = _component_rings(comp, sl[0].start, sl[1].start)
        rings_world = [tuple(gt.world(float(c), float(r)) for c, r in ring)
                       for ring in rings_px]
        # the outer ring encloses the holes, so it has the largest extent
        outer_idx = max(range(len(rings_world)),
                        key=lambda i: abs(shoelace(rings_world[i])))
        outer = _orient(rings_world[outer_idx], clockwise=True)
        holes = tuple(_orient(rings_world[i], clockwise=False)
                      for i in range(len(rings_world)) if i != outer_idx)
        area = abs(shoelace(outer)) - sum(abs(shoelace(h)) for h in holes)
        features.append(PolygonFeature(outer_ring=outer, holes=holes,
                                       feature_id=comp_id, area=area,
                                       pixel_count=pixel_count))
    return features


# ---------------------------------------------------------------------------
# simplification

def _point_segment_dist(p, a, b) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / den))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _dp_chain(pts, tolerance):
    if len(pts) <= 2:
        return list(pts)
    dmax, imax = -1.0, 0
    for i in range(1, len(pts) - 1):
        d = _point_segment_dist(pts[i], pts[0], pts[-1])
        if d > dmax:
            dmax, imax = d, i
    if dmax > tolerance:
        left = _dp_chain(pts[:imax + 1], tolerance)
        right = _dp_chain(pts[imax:], tolerance)
        return left[:-1] + right
    return [pts[0], pts[-1]]


def _simplify_ring(ring, tolerance):
    open_ring = list(ring[:-1])
    if len(open_ring) < 3:
        raise DegenerateRing("ring has fewer than 3 distinct vertices")
    anchor = max(range(1, len(open_ring)),
                 key=lambda i: math.hypot(open_ring[i][0] - open_ring[0][0],
                                          open_ring[i][1] - open_ring[0][1]))
    first = _dp_chain(open_ring[:anchor + 1], tolerance)
    second = _dp_chain(open_ring[anchor:] + [open_ring[0]], tolerance)
    merged = first[:-1] + second
    if len(merged) < 4:  # triangle plus closing vertex is the minimum
        raise DegenerateRing("simplification would collapse the ring")
    return tuple(merged)


def simplify(feature: PolygonFeature, tolerance: float) -> PolygonFeature:
    """Douglas-Peucker per ring. Tolerance 0 is the identity; if any ring
    would degenerate below 4 vertices the feature is returned unsimplified."""
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    if tolerance == 0.0:
        return feature
    try:
        outer = _simplify_ring(feature.outer_ring, tolerance)
        holes = tuple(_simplify_ring(h, tolerance) for h in feature.holes)
    except DegenerateRing:
        return feature
    return PolygonFeature(outer_ring=outer, holes=holes,
                          feature_id=feature.feature_id,
                          area=abs(shoelace(outer)) - sum(abs(shoelace(h)) for h in holes),
                          pixel_count=feature.pixel_count)


# ---------------------------------------------------------------------------
# shapefile writing

def _feature_bbox(feature):
    xs = [x for x, _ in feature.outer_ring]
    ys = [y for _, y in feature.outer_ring]
    return min(xs), min(ys), max(xs), max(ys)


def _record_content(feature: PolygonFeature) -> bytes:
    rings = [feature.outer_ring, *feature.holes]
    n_points = sum(len(r) for r in rings)
    xmin, ymin, xmax, ymax = _feature_bbox(feature)
    parts = []
    offset = 0
    for r in rings:
        parts.append(offset)
        offset += len(r)
    out = struct.pack("<i", 5)
    out += struct.pack("<4d", xmin, ymin, xmax, ymax)
    out += struct.pack("<2i", len(rings), n_points)
    out += struct.pack(f"<{len(parts)}i", *parts)
    for r in rings:
        for x, y in r:
            out += struct.pack("<2d", x, y)
    return out


def _main_header(file_bytes: int, shape_type: int, bbox) -> bytes:
    out = struct.pack(">i", 9994) + b"\x00" * 20
    out += struct.pack(">i", file_bytes // 2)
    out += struct.pack("<2i", 1000, shape_type)
    out += struct.pack("<4d", *bbox)
    out += struct.pack("<4d", 0.0, 0.0, 0.0, 0.0)
    return out


def _dbf_bytes(features) -> bytes:
    fields = [(b"id", 10, 0), (b"area", 19, 6), (b"px_count", 10, 0)]
    header_size = 32 + 32 * len(fields) + 1
    record_size = 1 + sum(w for _, w, _ in fields)
    out = bytearray()
    out += struct.pack("<4B", 0x03, *DBF_DATE)
    out += struct.pack("<I", len(features))
    out += struct.pack("<2H", header_size, record_size)
    out += b"\x00" * 20
    for name, width, dec in fields:
        out += name.ljust(11, b"\x00")
        out += b"N"
        out += b"\x00" * 4
        out += struct.pack("<2B", width, dec)
        out += b"\x00" * 14
    out += b"\x0d"
    for f in features:
        row = (f"{f.feature_id:>10d}"
               f"{f.area:>19.6f}"
               f"{f.pixel_count:>10d}")
        if len(row) != record_size - 1:
            raise IoFailure(f"attribute row width {len(row)} != {record_size - 1}")
        out += b" " + row.encode("ascii")
    out += b"\x1a"
    return bytes(out)


def write_shapefile(features: list[PolygonFeature], crs_text: str | None,
                    base_path: str) -> None:
    """Emit base_path + .shp/.shx/.dbf (and .prj when crs_text is given).

    An empty feature list writes a valid zero-record shapefile. Output bytes
    are deterministic.
    """
    records = []
    offset_words = 50  # header
    shx_entries = []
    for i, f in enumerate(features, start=1):
        content = _record_content(f)
        header = struct.pack(">2i", i, len(content) // 2)
        shx_entries.append((offset_words, len(content) // 2))
        records.append(header + content)
        offset_words += (len(header) + len(content)) // 2

    if features:
        boxes = [_feature_bbox(f) for f in features]
        bbox = (min(b[0] for b in boxes), min(b[1] for b in boxes),
                max(b[2] for b in boxes), max(b[3] for b in boxes))
    else:
        bbox = (0.0, 0.0, 0.0, 0.0)

    shp_len = 100 + sum(len(r) for r in records)
    shx_len = 100 + 8 * len(features)
    try:
        with open(base_path + ".shp", "wb") as fh:
            fh.write(_main_header(shp_len, 5, bbox))
            for r in records:
                fh.write(r)
        with open(base_path + ".shx", "wb") as fh:
            fh.write(_main_header(shx_len, 5, bbox))
            for off, length in shx_entries:
                fh.write(struct.pack(">2i", off, length))
        with open(base_path + ".dbf", "wb") as fh:
            fh.write(_dbf_bytes(features))
        if crs_text is not None:
            with open(base_path + ".prj", "w", encoding="ascii") as fh:
                fh.write(crs_text)
    except OSError as exc:
        raise IoFailure(f"cannot write shapefile {base_path}: {exc}") from exc
