"""Overlapped tiling of scenes into fixed-size patches plus augmentation.

Patches are square windows on a regular stride grid; under the snap edge
policy one extra window is pinned to the far border of each axis so no
pixel of the region is dropped. Augmentation applies rotations and flips
to image and mask in lockstep and brightness/contrast jitter to the image
alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigInvalid, RegionTooSmall, ShapeMismatch
from .raster import RasterGrid, GeoTransform, FULL_SCALE

ROLES = ("train_large", "train_small", "validation", "test")
GEOMETRIC_OPS = ("rot90", "rot180", "rot270", "hflip", "vflip")
AUGMENT_OPS = GEOMETRIC_OPS + ("brightness_contrast",)


@dataclass(frozen=True)
class RegionSpec:
    """Named sub-rectangle of a scene with a dataset role."""

    name: str
    role: str
    window: tuple[int, int, int, int]  # col_off, row_off, width, height

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigInvalid(f"region role {self.role!r} not one of {ROLES}")
        c, r, w, h = self.window
        if min(c, r) < 0 or min(w, h) < 1:
            raise ConfigInvalid(f"bad region window {self.window}")

    def validate_inside(self, grid: RasterGrid) -> None:
        c, r, w, h = self.window
        if c + w > grid.width or r + h > grid.height:
            raise ConfigInvalid(
                f"region {self.name!r} window {self.window} exceeds raster "
                f"{grid.width}x{grid.height}")


@dataclass(frozen=True)
class TileSpec:
    patch_size: int
    stride: int
    edge_policy: str = "snap"

    def __post_init__(self):
        if self.patch_size < 1:
            raise ConfigInvalid("patch_size must be >= 1")
        if not 1 <= self.stride <= self.patch_size:
            raise ConfigInvalid("stride must satisfy 1 <= stride <= patch_size")
        if self.edge_policy not in ("snap", "drop"):
            raise ConfigInvalid("edge_policy must be 'snap' or 'drop'")

    @property
    def overlap(self) -> int:
        return self.patch_size - self.stride


@dataclass(frozen=True)
class PatchRecord:
    parent_region: str
    window: tuple[int, int, int, int]  # col_off, row_off, size, size
    image: RasterGrid
    geo: GeoTransform
    mask: RasterGrid | None = None

    def __post_init__(self):
        if self.mask is not None:
            if (self.mask.width, self.mask.height) != (self.image.width, self.image.height):
                raise ShapeMismatch("patch image and mask dimensions differ")


def enumerate_windows(region_len: int, spec: TileSpec) -> list[int]:
    """Start offsets of all windows along one axis of a region."""
    if region_len < spec.patch_size:
        raise RegionTooSmall(
            f"region length {region_len} < patch size {spec.patch_size}")
    n_regular = (region_len - spec.patch_size) // spec.stride + 1
    offsets = [i * spec.stride for i in range(n_regular)]
    if spec.edge_policy == "snap" and offsets[-1] + spec.patch_size < region_len:
        offsets.append(region_len - spec.patch_size)
    return offsets


def extract_patches(grid: RasterGrid, gt: GeoTransform, region: RegionSpec,
                    spec: TileSpec, mask: RasterGrid | None = None) -> list[PatchRecord]:
    """Cut one region into overlapping square patches, row-major order."""
    region.validate_inside(grid)
    if mask is not None and (mask.width, mask.height) != (grid.width, grid.height):
        raise ShapeMismatch("mask dimensions differ from image")
    c0, r0, rw, rh = region.window
    col_offs = enumerate_windows(rw, spec)
    row_offs = enumerate_windows(rh, spec)
    p = spec.patch_size
    records = []
    for ro in row_offs:
        for co in col_offs:
            col, row = c0 + co, r0 + ro
            rec = PatchRecord(
                parent_region=region.name,
                window=(col, row, p, p),
                image=grid.window(col, row, p, p),
                geo=gt.translate(col, row),
                mask=mask.window(col, row, p, p) if mask is not None else None,
            )
            records.append(rec)
    return records


def _apply_geometric(arr: np.ndarray, op: str) -> np.ndarray:
    # rotations are counter-clockwise in pixel space
    if op == "rot90":
        return np.rot90(arr, 1, axes=(0, 1)).copy()
    if op == "rot180":
        return np.rot90(arr, 2, axes=(0, 1)).copy()
    if op == "rot270":
        return np.rot90(arr, 3, axes=(0, 1)).copy()
    if op == "hflip":
        return arr[:, ::-1, :].copy()
    if op == "vflip":
        return arr[::-1, :, :].copy()
    raise ConfigInvalid(f"unknown geometric op {op!r}")


def _brightness_contrast(arr: np.ndarray, rng: np.random.Generator,
                         sample_type: str) -> np.ndarray:
    alpha = rng.uniform(0.8, 1.2)
    full = FULL_SCALE[sample_type]
    beta = rng.uniform(-0.1, 0.1) * full
    out = arr.astype(np.float64) * alpha + beta
    if sample_type == "float32":
        return out.astype(np.float32)
    return np.clip(np.rint(out), 0, full).astype(arr.dtype)


def augment(patch: PatchRecord, ops, seed: int) -> list[PatchRecord]:
    """Original patch plus one augmented copy per requested op.

    Geometric ops transform image and mask identically; brightness_contrast
    jitters the image only, with parameters drawn from a generator seeded by
    ``seed`` so the output is reproducible. Augmented copies keep the source
    window's GeoTransform: they exist only as training samples.
    """
    unknown = set(ops) - set(AUGMENT_OPS)
    if unknown:
        raise ConfigInvalid(f"unknown augment ops {sorted(unknown)}")
    out = [patch]
    rng = np.random.default_rng(seed)
    for op in AUGMENT_OPS:  # canonical order keeps runs reproducible
        if op not in ops:
            continue
        if op == "brightness_contrast":
            img = RasterGrid(_brightness_contrast(patch.image.pixels, rng,
                                                  patch.image.sample_type))
            new_mask = patch.mask
        else:
            img = RasterGrid(_apply_geometric(patch.image.pixels, op))
            new_mask = (RasterGrid(_apply_geometric(patch.mask.pixels, op))
                        if patch.mask is not None else None)
        out.append(replace(patch, image=img, mask=new_mask))
    return out
