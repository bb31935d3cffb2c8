"""Minimal GeoTIFF reader/writer and ESRI world file support.

Supported TIFF subset: baseline little- or big-endian, strip or tile
organization, chunky planar layout, no compression or Deflate, 1-4 samples
per pixel of uint8/uint16/float32. Georeferencing comes from the
ModelPixelScale + ModelTiepoint tag pair or from a sidecar world file.
Anything outside the subset raises UnsupportedFeature; structural damage
raises MalformedFile. There are no silent fallbacks.
"""

from __future__ import annotations

import math
import os
import struct
import zlib

import numpy as np

from .errors import IoFailure, MalformedFile, MissingGeoreference, UnsupportedFeature
from .raster import RasterGrid, GeoTransform, SAMPLE_DTYPES

# TIFF tag ids
TAG_IMAGE_WIDTH = 256
TAG_IMAGE_LENGTH = 257
TAG_BITS_PER_SAMPLE = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279
TAG_PLANAR_CONFIG = 284
TAG_PREDICTOR = 317
TAG_TILE_WIDTH = 322
TAG_TILE_LENGTH = 323
TAG_TILE_OFFSETS = 324
TAG_TILE_BYTE_COUNTS = 325
TAG_SAMPLE_FORMAT = 339
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_MODEL_TRANSFORMATION = 34264
TAG_GEO_KEY_DIRECTORY = 34735
TAG_GEO_ASCII_PARAMS = 34737

GEOKEY_CITATION = 1026

COMPRESSION_NONE = 1
COMPRESSION_ADOBE_DEFLATE = 8
COMPRESSION_DEFLATE = 32946

# field type -> byte size (classic TIFF types)
TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}
TYPE_BYTE, TYPE_ASCII, TYPE_SHORT, TYPE_LONG, TYPE_RATIONAL = 1, 2, 3, 4, 5
TYPE_FLOAT, TYPE_DOUBLE = 11, 12

WORLD_FILE_SUFFIXES = (".tfw", ".wld")


def _struct_fmt(type_id: int, count: int, endian: str) -> str:
    letter = {TYPE_BYTE: "B", TYPE_ASCII: "s", TYPE_SHORT: "H", TYPE_LONG: "I",
              TYPE_RATIONAL: "II", 6: "b", 7: "B", 8: "h", 9: "i", 10: "ii",
              TYPE_FLOAT: "f", TYPE_DOUBLE: "d"}[type_id]
    if type_id == TYPE_ASCII:
        return f"{endian}{count}s"
    return f"{endian}{letter * count}"


def _read_tag_values(data: bytes, endian: str, type_id: int, count: int, inline: bytes):
    size = TYPE_SIZES.get(type_id)
    if size is None:
        raise UnsupportedFeature(f"TIFF field type {type_id} outside supported subset")
    total = size * count
    if total <= 4:
        raw = inline[:total]
    else:
        (offset,) = struct.unpack(endian + "I", inline)
        if offset + total > len(data):
            raise MalformedFile("tag value block extends past end of file")
        raw = data[offset:offset + total]
    values = struct.unpack(_struct_fmt(type_id, count, endian), raw)
    if type_id == TYPE_ASCII:
        return values[0]
    if type_id in (TYPE_RATIONAL, 10):
        return tuple(values[i] / values[i + 1] if values[i + 1] else 0.0
                     for i in range(0, len(values), 2))
    return values


def _parse_ifd(data: bytes, endian: str, ifd_offset: int) -> dict[int, tuple]:
    if ifd_offset + 2 > len(data):
        raise MalformedFile("IFD offset past end of file")
    (entry_count,) = struct.unpack_from(endian + "H", data, ifd_offset)
    end = ifd_offset + 2 + entry_count * 12 + 4
    if end > len(data):
        raise MalformedFile("truncated IFD")
    tags: dict[int, tuple] = {}
    for i in range(entry_count):
        base = ifd_offset + 2 + i * 12
        tag, type_id, count = struct.unpack_from(endian + "HHI", data, base)
        inline = data[base + 8:base + 12]
        try:
            tags[tag] = (type_id, count, _read_tag_values(data, endian, type_id, count, inline))
        except UnsupportedFeature:
            # tolerate exotic value types on tags we never interpret
            if tag in _KNOWN_TAGS:
                raise
    return tags


_KNOWN_TAGS = {
    TAG_IMAGE_WIDTH, TAG_IMAGE_LENGTH, TAG_BITS_PER_SAMPLE, TAG_COMPRESSION,
    TAG_PHOTOMETRIC, TAG_STRIP_OFFSETS, TAG_SAMPLES_PER_PIXEL, TAG_ROWS_PER_STRIP,
    TAG_STRIP_BYTE_COUNTS, TAG_PLANAR_CONFIG, TAG_PREDICTOR, TAG_TILE_WIDTH,
    TAG_TILE_LENGTH, TAG_TILE_OFFSETS, TAG_TILE_BYTE_COUNTS, TAG_SAMPLE_FORMAT,
    TAG_MODEL_PIXEL_SCALE, TAG_MODEL_TIEPOINT, TAG_GEO_KEY_DIRECTORY,
    TAG_GEO_ASCII_PARAMS,
}


def _tag_scalar(tags, tag, default=None):
    if tag not in tags:
        return default
    return tags[tag][2][0]


def _tag_array(tags, tag, default=None):
    if tag not in tags:
        return default
    return tags[tag][2]


def _decode_segment(raw: bytes, compression: int, expected: int) -> bytes:
    if compression == COMPRESSION_NONE:
        out = raw
    else:
        try:
            out = zlib.decompress(raw)
        except zlib.error as exc:
            raise MalformedFile(f"Deflate stream failed to decode: {exc}") from exc
    if len(out) < expected:
        raise MalformedFile(f"segment decoded to {len(out)} bytes, expected {expected}")
    return out[:expected]


def _sample_dtype(bits: int, sample_format: int, endian: str) -> np.dtype:
    if sample_format == 1 and bits == 8:
        base = np.dtype(np.uint8)
    elif sample_format == 1 and bits == 16:
        base = np.dtype(np.uint16)
    elif sample_format == 3 and bits == 32:
        base = np.dtype(np.float32)
    else:
        raise UnsupportedFeature(
            f"sample format {sample_format} at {bits} bits outside supported subset")
    return base.newbyteorder("<" if endian == "<" else ">")


def _extract_georeference(tags, path: str, default):
    has_scale = TAG_MODEL_PIXEL_SCALE in tags
    has_tiepoint = TAG_MODEL_TIEPOINT in tags
    crs_text = _extract_crs(tags)
    if has_scale and has_tiepoint:
        sx, sy = _tag_array(tags, TAG_MODEL_PIXEL_SCALE)[:2]
        tie = _tag_array(tags, TAG_MODEL_TIEPOINT)
        if len(tie) < 6:
            raise MalformedFile("ModelTiepoint tag holds fewer than 6 values")
        col, row, _, wx, wy, _ = tie[:6]
        if sx == 0 or sy == 0:
            raise MalformedFile("ModelPixelScale carries a zero pixel size")
        # tiepoint pins raster (col,row) to world (wx,wy); sy is positive in
        # the tag while rows grow downward, hence the sign flip
        return GeoTransform(wx - col * sx, wy + row * sy, sx, -sy, crs_text=crs_text)
    if TAG_MODEL_TRANSFORMATION in tags:
        raise UnsupportedFeature("ModelTransformation georeferencing not supported; "
                                 "use ModelPixelScale + ModelTiepoint or a world file")
    base, _ = os.path.splitext(path)
    for suffix in WORLD_FILE_SUFFIXES:
        sidecar = base + suffix
        if os.path.exists(sidecar):
            gt = read_world_file(sidecar)
            if crs_text is not None:
                gt = GeoTransform(gt.origin_x, gt.origin_y, gt.pixel_width,
                                  gt.pixel_height, gt.row_rotation, gt.col_rotation,
                                  crs_text)
            return gt
    if default is not None:
        return default
    raise MissingGeoreference(
        f"{path}: no ModelPixelScale/ModelTiepoint tags and no world file; "
        "pass default_transform to accept an ungeoreferenced raster")


def _extract_crs(tags) -> str | None:
    if TAG_GEO_ASCII_PARAMS not in tags:
        return None
    raw = _tag_array(tags, TAG_GEO_ASCII_PARAMS)
    text = raw.split(b"\x00", 1)[0].decode("ascii", errors="replace")
    if TAG_GEO_KEY_DIRECTORY in tags:
        keys = _tag_array(tags, TAG_GEO_KEY_DIRECTORY)
        for i in range(4, len(keys) - 3, 4):
            key_id, location, count, offset = keys[i:i + 4]
            if key_id == GEOKEY_CITATION and location == TAG_GEO_ASCII_PARAMS:
                chunk = text[offset:offset + count]
                return chunk.rstrip("|").rstrip("\x00") or None
    return text.rstrip("|").rstrip("\x00") or None


def read_geotiff(path: str, default_transform: GeoTransform | None = None):
    """Decode a supported-subset GeoTIFF into (RasterGrid, GeoTransform)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(data) < 8:
        raise MalformedFile(f"{path}: shorter than a TIFF header")
    order = data[:2]
    if order == b"II":
        endian = "<"
    elif order == b"MM":
        endian = ">"
    else:
        raise MalformedFile(f"{path}: byte-order mark {order!r} is not II or MM")
    magic, ifd_offset = struct.unpack_from(endian + "HI", data, 2)
    if magic == 43:
        raise UnsupportedFeature("BigTIFF not supported")
    if magic != 42:
        raise MalformedFile(f"{path}: bad TIFF magic {magic}")

    tags = _parse_ifd(data, endian, ifd_offset)

    width = _tag_scalar(tags, TAG_IMAGE_WIDTH)
    height = _tag_scalar(tags, TAG_IMAGE_LENGTH)
    if width is None or height is None:
        raise MalformedFile(f"{path}: missing ImageWidth/ImageLength")
    samples = int(_tag_scalar(tags, TAG_SAMPLES_PER_PIXEL, 1))
    if not 1 <= samples <= 4:
        raise UnsupportedFeature(f"{samples} samples/pixel outside supported 1..4")

    bits = _tag_array(tags, TAG_BITS_PER_SAMPLE, (8,) * samples)
    if len(set(bits)) != 1:
        raise UnsupportedFeature("mixed per-band bit depths not supported")
    formats = _tag_array(tags, TAG_SAMPLE_FORMAT, (1,) * samples)
    if len(set(formats)) != 1:
        raise UnsupportedFeature("mixed per-band sample formats not supported")

    compression = int(_tag_scalar(tags, TAG_COMPRESSION, COMPRESSION_NONE))
    if compression not in (COMPRESSION_NONE, COMPRESSION_ADOBE_DEFLATE, COMPRESSION_DEFLATE):
        raise UnsupportedFeature(f"compression {compression} outside none/Deflate subset")
    photometric = int(_tag_scalar(tags, TAG_PHOTOMETRIC, 1))
    if photometric not in (0, 1, 2):
        raise UnsupportedFeature(f"photometric interpretation {photometric} not supported")
    planar = int(_tag_scalar(tags, TAG_PLANAR_CONFIG, 1))
    if planar != 1:
        raise UnsupportedFeature("planar (band-separate) layout not supported")
    predictor = int(_tag_scalar(tags, TAG_PREDICTOR, 1))
    if predictor != 1:
        raise UnsupportedFeature(f"predictor {predictor} not supported")

    dtype = _sample_dtype(bits[0], formats[0], endian)
    itemsize = dtype.itemsize

    tiled = TAG_TILE_OFFSETS in tags
    if tiled:
        pixels = _read_tiles(data, tags, width, height, samples, compression, dtype)
    else:
        pixels = _read_strips(data, tags, width, height, samples, compression, dtype, itemsize)

    grid = RasterGrid(pixels.astype(dtype.newbyteorder("="), copy=False))
    gt = _extract_georeference(tags, path, default_transform)
    return grid, gt


def _read_strips(data, tags, width, height, samples, compression, dtype, itemsize):
    offsets = _tag_array(tags, TAG_STRIP_OFFSETS)
    counts = _tag_array(tags, TAG_STRIP_BYTE_COUNTS)
    if offsets is None or counts is None:
        raise MalformedFile("missing StripOffsets/StripByteCounts")
    if len(offsets) != len(counts):
        raise MalformedFile("StripOffsets and StripByteCounts disagree in length")
    rows_per_strip = int(_tag_scalar(tags, TAG_ROWS_PER_STRIP, height))
    rows_per_strip = min(rows_per_strip, height)
    expected_strips = math.ceil(height / rows_per_strip)
    if len(offsets) < expected_strips:
        raise MalformedFile("fewer strips than the image requires")
    row_bytes = width * samples * itemsize
    chunks = []
    for i in range(expected_strips):
        rows = min(rows_per_strip, height - i * rows_per_strip)
        off, cnt = offsets[i], counts[i]
        if off + cnt > len(data):
            raise MalformedFile(f"strip {i} overflows the file")
        chunks.append(_decode_segment(data[off:off + cnt], compression, rows * row_bytes))
    flat = np.frombuffer(b"".join(chunks), dtype=dtype)
    return flat.reshape(height, width, samples)


def _read_tiles(data, tags, width, height, samples, compression, dtype):
    tile_w = _tag_scalar(tags, TAG_TILE_WIDTH)
    tile_h = _tag_scalar(tags, TAG_TILE_LENGTH)
    offsets = _tag_array(tags, TAG_TILE_OFFSETS)
    counts = _tag_array(tags, TAG_TILE_BYTE_COUNTS)
    if tile_w is None or tile_h is None or offsets is None or counts is None:
        raise MalformedFile("incomplete tile tag set")
    tiles_across = math.ceil(width / tile_w)
    tiles_down = math.ceil(height / tile_h)
    if len(offsets) < tiles_across * tiles_down:
        raise MalformedFile("fewer tiles than the image requires")
    tile_bytes = tile_w * tile_h * samples * dtype.itemsize
    canvas = np.zeros((height, width, samples), dtype=dtype.newbyteorder("="))
    for ty in range(tiles_down):
        for tx in range(tiles_across):
            idx = ty * tiles_across + tx
            off, cnt = offsets[idx], counts[idx]
            if off + cnt > len(data):
                raise MalformedFile(f"tile {idx} overflows the file")
            raw = _decode_segment(data[off:off + cnt], compression, tile_bytes)
            tile = np.frombuffer(raw, dtype=dtype).reshape(tile_h, tile_w, samples)
            h = min(tile_h, height - ty * tile_h)
            w = min(tile_w, width - tx * tile_w)
            canvas[ty * tile_h:ty * tile_h + h, tx * tile_w:tx * tile_w + w, :] = tile[:h, :w, :]
    return canvas


def write_geotiff(grid: RasterGrid, gt: GeoTransform, path: str,
                  compression: str = "none", byte_order: str = "little") -> None:
    """Write the grid as a strip-organized GeoTIFF readable by read_geotiff.

    Output is deterministic: no timestamps, fixed strip layout, fixed zlib
    level. compression is "none" or "deflate".
    """
    if compression not in ("none", "deflate"):
        raise UnsupportedFeature(f"compression {compression!r} not in none/deflate")
    if byte_order not in ("little", "big"):
        raise UnsupportedFeature("byte_order must be 'little' or 'big'")
    endian = "<" if byte_order == "little" else ">"

    arr = grid.pixels
    height, width, samples = arr.shape
    itemsize = arr.dtype.itemsize
    sample_format = 3 if arr.dtype == np.float32 else 1
    bits = itemsize * 8

    row_bytes = width * samples * itemsize
    rows_per_strip = min(height, max(1, 65536 // max(1, row_bytes)))
    n_strips = math.ceil(height / rows_per_strip)
    ordered = arr.astype(arr.dtype.newbyteorder(endian), copy=False)
    strips = []
    for i in range(n_strips):
        r0 = i * rows_per_strip
        raw = ordered[r0:r0 + rows_per_strip].tobytes()
        strips.append(zlib.compress(raw, 6) if compression == "deflate" else raw)

    # tag list: (tag, type, values). Extra-data offsets resolved at layout time.
    photometric = 2 if samples >= 3 else 1
    comp_id = COMPRESSION_ADOBE_DEFLATE if compression == "deflate" else COMPRESSION_NONE
    tags: list[tuple[int, int, tuple]] = [
        (TAG_IMAGE_WIDTH, TYPE_LONG, (width,)),
        (TAG_IMAGE_LENGTH, TYPE_LONG, (height,)),
        (TAG_BITS_PER_SAMPLE, TYPE_SHORT, (bits,) * samples),
        (TAG_COMPRESSION, TYPE_SHORT, (comp_id,)),
        (TAG_PHOTOMETRIC, TYPE_SHORT, (photometric,)),
        (TAG_STRIP_OFFSETS, TYPE_LONG, None),  # filled in below
        (TAG_SAMPLES_PER_PIXEL, TYPE_SHORT, (samples,)),
        (TAG_ROWS_PER_STRIP, TYPE_LONG, (rows_per_strip,)),
        (TAG_STRIP_BYTE_COUNTS, TYPE_LONG, tuple(len(s) for s in strips)),
        (TAG_PLANAR_CONFIG, TYPE_SHORT, (1,)),
        (TAG_SAMPLE_FORMAT, TYPE_SHORT, (sample_format,) * samples),
        (TAG_MODEL_PIXEL_SCALE, TYPE_DOUBLE,
         (abs(gt.pixel_width), abs(gt.pixel_height), 0.0)),
        (TAG_MODEL_TIEPOINT, TYPE_DOUBLE,
         (0.0, 0.0, 0.0, gt.origin_x, gt.origin_y, 0.0)),
    ]
    if gt.crs_text:
        ascii_params = gt.crs_text.encode("ascii") + b"|\x00"
        tags.append((TAG_GEO_KEY_DIRECTORY, TYPE_SHORT,
                     (1, 1, 0, 1, GEOKEY_CITATION, TAG_GEO_ASCII_PARAMS,
                      len(ascii_params) - 1, 0)))
        tags.append((TAG_GEO_ASCII_PARAMS, TYPE_ASCII, ascii_params))
    tags.sort(key=lambda t: t[0])

    # layout: header | strips | tag extra data | IFD
    strip_offsets = []
    cursor = 8
    for s in strips:
        strip_offsets.append(cursor)
        cursor += len(s)
    tags = [(t, ty, tuple(strip_offsets) if t == TAG_STRIP_OFFSETS else v)
            for (t, ty, v) in tags]

    extra_blocks: list[bytes] = []
    entries: list[tuple[int, int, int, bytes]] = []
    for tag, type_id, values in tags:
        if type_id == TYPE_ASCII:
            payload = struct.pack(_struct_fmt(type_id, len(values), endian), values)
            count = len(values)
        else:
            payload = struct.pack(_struct_fmt(type_id, len(values), endian), *values)
            count = len(values)
        if len(payload) <= 4:
            inline = payload.ljust(4, b"\x00")
            entries.append((tag, type_id, count, inline))
        else:
            extra_blocks.append(payload)
            entries.append((tag, type_id, count, None))  # offset patched next

    extra_offsets = []
    for blk in extra_blocks:
        extra_offsets.append(cursor)
        cursor += len(blk)
    ifd_offset = cursor

    blob = bytearray()
    blob += order_mark(byte_order) + struct.pack(endian + "HI", 42, ifd_offset)
    for s in strips:
        blob += s
    for blk in extra_blocks:
        blob += blk
    blob += struct.pack(endian + "H", len(entries))
    blk_idx = 0
    for tag, type_id, count, inline in entries:
        if inline is None:
            inline = struct.pack(endian + "I", extra_offsets[blk_idx])
            blk_idx += 1
        blob += struct.pack(endian + "HHI", tag, type_id, count) + inline
    blob += struct.pack(endian + "I", 0)  # no next IFD

    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def order_mark(byte_order: str) -> bytes:
    return b"II" if byte_order == "little" else b"MM"


def read_world_file(path: str) -> GeoTransform:
    """Parse a six-line world file into a corner-origin GeoTransform.

    World files reference the center of the upper-left pixel; the half-pixel
    shift to the corner convention happens here.
    """
    try:
        with open(path, "r", encoding="ascii") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(lines) != 6:
        raise MalformedFile(f"{path}: world file needs 6 lines, found {len(lines)}")
    try:
        vals = [float(ln) for ln in lines]
    except ValueError as exc:
        raise MalformedFile(f"{path}: non-numeric world file line: {exc}") from exc
    pw, row_rot, col_rot, ph, cx, cy = vals
    if pw == 0 or ph == 0:
        raise MalformedFile(f"{path}: zero pixel size")
    origin_x = cx - 0.5 * pw - 0.5 * row_rot
    origin_y = cy - 0.5 * col_rot - 0.5 * ph
    return GeoTransform(origin_x, origin_y, pw, ph, row_rot, col_rot)


def write_world_file(gt: GeoTransform, path: str) -> None:
    """Serialize the transform as a six-line world file (center convention)."""
    cx = gt.origin_x + 0.5 * gt.pixel_width + 0.5 * gt.row_rotation
    cy = gt.origin_y + 0.5 * gt.col_rotation + 0.5 * gt.pixel_height
    lines = [gt.pixel_width, gt.row_rotation, gt.col_rotation, gt.pixel_height, cx, cy]
    try:
        with open(path, "w", encoding="ascii") as fh:
            for v in lines:
                fh.write(f"{v!r}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
