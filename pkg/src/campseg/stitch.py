"""Whole-scene inference by overlapped tiles with mean-of-logits blending.

Every pixel is covered by at least one tile under the snap edge policy; the
stitched value is the arithmetic mean of the logits from all covering tiles,
accumulated in float64 so constant-logit scenes come back exactly constant
and tile evaluation order cannot change the result.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid
from .raster import RasterGrid
from .tiler import TileSpec, enumerate_windows

_THREADS_ENV = "CAMPSEG_THREADS"


@dataclass(frozen=True)
class StitchSpec:
    tile: TileSpec
    blend: str = "mean_logits"
    threshold: float = 0.5

    def __post_init__(self):
        if self.blend != "mean_logits":
            raise ConfigInvalid(f"unknown blend mode {self.blend!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigInvalid("threshold must lie strictly inside (0, 1)")


def _worker_count() -> int:
    raw = os.environ.get(_THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _to_model_input(tile_pixels: np.ndarray) -> np.ndarray:
    """[h, w, bands] uint -> [3, h, w] float32 in [0, 1]."""
    arr = tile_pixels
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    arr = arr[:, :, :3].astype(np.float32)
    if tile_pixels.dtype == np.uint8:
        arr /= np.float32(255.0)
    elif tile_pixels.dtype == np.uint16:
        arr /= np.float32(65535.0)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def sliding_inference(grid: RasterGrid, model, spec: StitchSpec) -> np.ndarray:
    """Stitched logits [1, H, W] for a whole scene.

    model is either a ModelCheckpoint (a predictor is built from it) or a
    callable mapping a float32 [3, p, p] array to [1, p, p] logits. Tiles can
    be evaluated in parallel (CAMPSEG_THREADS); accumulation happens in a
    fixed window order regardless.
    """
    if callable(model):
        predict = model
        patch = spec.tile.patch_size
    else:
        from .nn.models import predictor_from_checkpoint, patch_size_of
        predict = predictor_from_checkpoint(model)
        patch = patch_size_of(model)
        if patch != spec.tile.patch_size:
            raise ConfigInvalid(
                f"checkpoint expects {patch}px tiles, spec requests "
                f"{spec.tile.patch_size}px")

    tile_spec = TileSpec(patch, spec.tile.stride, "snap")
    col_offs = enumerate_windows(grid.width, tile_spec)
    row_offs = enumerate_windows(grid.height, tile_spec)
    windows = [(c, r) for r in row_offs for c in col_offs]

    def run(window):
        c, r = window
        tile = grid.pixels[r:r + patch, c:c + patch, :]
        return predict(_to_model_input(tile))

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, windows))
    else:
        results = [run(w) for w in windows]

    acc = np.zeros((grid.height, grid.width), dtype=np.float64)
    cover = np.zeros((grid.height, grid.width), dtype=np.int64)
    for (c, r), logits in zip(windows, results):
        acc[r:r + patch, c:c + patch] += logits[0].astype(np.float64)
        cover[r:r + patch, c:c + patch] += 1
    assert cover.min() >= 1
    return (acc / cover).astype(np.float32)[np.newaxis, :, :]


def binarize(logits: np.ndarray, threshold: float = 0.5) -> RasterGrid:
    """sigmoid(logit) >= threshold -> 255, else 0 (inclusive boundary)."""
    plane = logits[0] if logits.ndim == 3 else logits
    prob = 1.0 / (1.0 + np.exp(-plane.astype(np.float64)))
    return RasterGrid(np.where(prob >= threshold, 255, 0).astype(np.uint8))
