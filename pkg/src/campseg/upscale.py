"""Raster zoom-level increase: nearest, bilinear, and learned super-resolution.

Nearest and bilinear follow a pinned-down sampling convention so results are
reproducible bit-for-bit anywhere: bilinear uses half-pixel centers, i.e.
source coordinate s = (d + 0.5)/factor - 0.5 clamped to the valid range,
blended in float32, uint outputs rounded half away from zero. Masks must
always be upscaled with nearest so labels stay binary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, ShapeMismatch
from .nn.tensor import pixel_shuffle  # channel-to-space op used by the SR net
from .raster import RasterGrid


def upscale_nearest(grid: RasterGrid, factor: int) -> RasterGrid:
    """out(r, c) = in(r // factor, c // factor)."""
    if factor < 1:
        raise ConfigInvalid("factor must be >= 1")
    if factor == 1:
        return grid
    out = np.repeat(np.repeat(grid.pixels, factor, axis=0), factor, axis=1)
    return RasterGrid(out)


def _axis_weights(in_len: int, factor: int):
    d = np.arange(in_len * factor, dtype=np.float32)
    s = (d + np.float32(0.5)) / np.float32(factor) - np.float32(0.5)
    s = np.clip(s, 0.0, in_len - 1)
    i0 = np.floor(s).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_len - 1)
    w = (s - i0.astype(np.float32)).astype(np.float32)
    return i0, i1, w


def upscale_bilinear(grid: RasterGrid, factor: int) -> RasterGrid:
    if factor < 1:
        raise ConfigInvalid("factor must be >= 1")
    if factor == 1:
        return grid
    arr = grid.pixels.astype(np.float32)
    r0, r1, wr = _axis_weights(grid.height, factor)
    c0, c1, wc = _axis_weights(grid.width, factor)
    rows = arr[r0] * (1.0 - wr)[:, None, None] + arr[r1] * wr[:, None, None]
    out = rows[:, c0] * (1.0 - wc)[None, :, None] + rows[:, c1] * wc[None, :, None]
    if grid.sample_type == "float32":
        return RasterGrid(out)
    full = 255 if grid.sample_type == "uint8" else 65535
    return RasterGrid(np.clip(np.floor(out + 0.5), 0, full).astype(grid.pixels.dtype))


def psnr(a: RasterGrid, b: RasterGrid, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB between two same-shape rasters."""
    if a.pixels.shape != b.pixels.shape:
        raise ShapeMismatch("psnr requires identical raster shapes")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


@dataclass(frozen=True)
class EdsrConfig:
    """Desk-scale enhanced-residual SR network; x4 via two pixel-shuffle stages."""

    feature_channels: int = 16
    residual_blocks: int = 8
    residual_scaling: float = 1.0
    scale: int = 4

    def __post_init__(self):
        if self.scale != 4:
            raise ConfigInvalid("scale is fixed to 4 (two x2 shuffle stages)")
        if self.feature_channels < 1 or self.residual_blocks < 1:
            raise ConfigInvalid("channels and blocks must be >= 1")
        if not 0.0 < self.residual_scaling <= 1.0:
            raise ConfigInvalid("residual_scaling must lie in (0, 1]")


def edsr_forward(grid: RasterGrid, params, cfg: EdsrConfig = EdsrConfig()) -> RasterGrid:
    """Run the SR network over a raster; output dims are input x4.

    Single-band input is replicated to 3 bands; 4-band input keeps its first
    three. params is a ModelCheckpoint produced by init or training.
    """
    from .nn import models

    arr = grid.pixels
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    elif arr.shape[2] > 3:
        arr = arr[:, :, :3]
    x = arr.astype(np.float32).transpose(2, 0, 1) / np.float32(255.0)
    y = models.edsr_net_forward(x, params, cfg)
    out = np.clip(np.rint(y * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    return RasterGrid(out)


def init_edsr(cfg: EdsrConfig = EdsrConfig(), seed: int = 0):
    from .nn import models
    return models.init_edsr_checkpoint(cfg, seed)


def fit_edsr(pairs, cfg: EdsrConfig = EdsrConfig(), epochs: int = 12,
             lr: float = 1e-3, seed: int = 0, on_epoch=None):
    """Train the SR network on (low-res RasterGrid, high-res RasterGrid) pairs.

    Optimizes mean absolute error with decoupled-decay Adam; deterministic
    for a fixed seed. Returns the trained ModelCheckpoint.
    """
    from .nn import models
    return models.fit_edsr_checkpoint(pairs, cfg, epochs, lr, seed, on_epoch)
