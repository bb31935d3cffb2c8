"""Core raster value types: the pixel grid and its affine georeferencing.

A RasterGrid is the currency of the whole pipeline: every reader, tiler,
upscaler and writer consumes and produces one. Treat instances as immutable
values; operations always return new grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

SAMPLE_DTYPES = {
    "uint8": np.uint8,
    "uint16": np.uint16,
    "float32": np.float32,
}

# value used as "full scale" by augmentation and degradation per sample type
FULL_SCALE = {"uint8": 255.0, "uint16": 65535.0, "float32": 1.0}


@dataclass(frozen=True)
class RasterGrid:
    """Dense pixel array, row-major and band-interleaved.

    ``pixels`` has shape (height, width, bands) and one of the supported
    sample dtypes (uint8, uint16, float32).
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ShapeMismatch(f"raster array must be 2-D or 3-D, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeMismatch(f"raster must be at least 1x1, got {arr.shape}")
        if not 1 <= arr.shape[2] <= 4:
            raise ShapeMismatch(f"band count must be 1..4, got {arr.shape[2]}")
        if arr.dtype.name not in SAMPLE_DTYPES:
            raise ShapeMismatch(f"unsupported sample type {arr.dtype.name}")
        object.__setattr__(self, "pixels", np.ascontiguousarray(arr))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def bands(self) -> int:
        return self.pixels.shape[2]

    @property
    def sample_type(self) -> str:
        return self.pixels.dtype.name

    def band(self, i: int) -> np.ndarray:
        return self.pixels[:, :, i]

    def window(self, col_off: int, row_off: int, width: int, height: int) -> "RasterGrid":
        if col_off < 0 or row_off < 0 or col_off + width > self.width or row_off + height > self.height:
            raise ShapeMismatch(
                f"window ({col_off},{row_off},{width},{height}) outside raster "
                f"{self.width}x{self.height}"
            )
        return RasterGrid(self.pixels[row_off:row_off + height, col_off:col_off + width, :].copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, RasterGrid):
            return NotImplemented
        return (self.pixels.shape == other.pixels.shape
                and self.pixels.dtype == other.pixels.dtype
                and np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True)
class GeoTransform:
    """Affine pixel->world mapping, corner-origin convention.

    world(col,row) = (origin_x + col*pixel_width, origin_y + row*pixel_height)
    in the supported rotation-free subset. pixel_height is negative for
    north-up rasters.
    """

    origin_x: float
    origin_y: float
    pixel_width: float
    pixel_height: float
    row_rotation: float = 0.0
    col_rotation: float = 0.0
    crs_text: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.pixel_width == 0 or self.pixel_height == 0:
            raise ShapeMismatch("pixel sizes must be nonzero")

    def world(self, col: float, row: float) -> tuple[float, float]:
        x = self.origin_x + col * self.pixel_width + row * self.row_rotation
        y = self.origin_y + col * self.col_rotation + row * self.pixel_height
        return x, y

    def translate(self, col_off: int, row_off: int) -> "GeoTransform":
        """Transform of a window whose (0,0) pixel sits at (col_off,row_off)."""
        x, y = self.world(col_off, row_off)
        return GeoTransform(x, y, self.pixel_width, self.pixel_height,
                            self.row_rotation, self.col_rotation, self.crs_text)

    def scaled(self, factor: int) -> "GeoTransform":
        """Transform after the raster was upscaled by an integer factor."""
        return GeoTransform(self.origin_x, self.origin_y,
                            self.pixel_width / factor, self.pixel_height / factor,
                            self.row_rotation / factor, self.col_rotation / factor,
                            self.crs_text)


def identity_transform(crs_text: str | None = None) -> GeoTransform:
    return GeoTransform(0.0, 0.0, 1.0, -1.0, crs_text=crs_text)
