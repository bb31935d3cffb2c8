"""Procedural synthetic camp scenes with ground-truth dwelling masks.

Scenes mimic the difficulty profile of overhead dwelling imagery: textured
background (so a plain threshold fails), rectangular / circular / L-shaped
roofs, a configurable share of roofs whose intensity blends into the
background, and vegetation-like occluders painted over the image but not
the mask. Also provides box-average degradation for building HR/LR
super-resolution training pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigInvalid, IndivisibleDimensions
from .raster import RasterGrid, GeoTransform

# placeholder projected CRS carried into outputs so .prj files are emitted
SYNTH_CRS = ('PROJCS["synthcamp_local",GEOGCS["GCS_WGS_1984",DATUM["D_WGS_1984",'
             'SPHEROID["WGS_1984",6378137.0,298.257223563]],PRIMEM["Greenwich",0.0],'
             'UNIT["Degree",0.0174532925199433]],PROJECTION["Transverse_Mercator"],'
             'UNIT["Meter",1.0]]')


@dataclass(frozen=True)
class SceneConfig:
    width: int = 512
    height: int = 512
    dwelling_count: int = 60
    dwelling_size_range: tuple[int, int] = (8, 22)
    shape_mix: tuple[float, float, float] = (0.5, 0.3, 0.2)  # rectangle, circle, L
    background_texture_scale: int = 32
    occluder_fraction: float = 0.1
    noise_sigma: float = 6.0
    camouflage_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ConfigInvalid("scene must be at least 8x8")
        if self.dwelling_count < 0:
            raise ConfigInvalid("dwelling_count must be >= 0")
        lo, hi = self.dwelling_size_range
        if lo < 2 or hi < lo:
            raise ConfigInvalid("dwelling_size_range must be increasing and >= 2")
        if abs(sum(self.shape_mix) - 1.0) > 1e-9:
            raise ConfigInvalid("shape_mix must sum to 1")
        for f in (*self.shape_mix, self.occluder_fraction, self.camouflage_fraction):
            if not 0.0 <= f <= 1.0:
                raise ConfigInvalid("fractions must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ConfigInvalid("noise_sigma must be >= 0")
        if self.background_texture_scale < 1:
            raise ConfigInvalid("background_texture_scale must be >= 1")


def _smooth_field(rng, h, w, scale):
    field_ = rng.standard_normal((h, w))
    smooth = ndimage.gaussian_filter(field_, sigma=scale / 2.0, mode="reflect")
    std = smooth.std()
    return smooth / std if std > 0 else smooth


def _shape_footprint(rng, kind: str, size: int) -> np.ndarray:
    """Boolean footprint of one dwelling inside a size x size box."""
    if kind == "rectangle":
        w = max(2, int(rng.integers(size // 2, size + 1)))
        h = max(2, int(rng.integers(size // 2, size + 1)))
        fp = np.zeros((size, size), dtype=bool)
        fp[:h, :w] = True
        return fp
    if kind == "circle":
        r = size / 2.0
        yy, xx = np.mgrid[0:size, 0:size]
        return (yy - r + 0.5) ** 2 + (xx - r + 0.5) ** 2 <= r * r
    if kind == "lshape":
        fp = np.ones((size, size), dtype=bool)
        cut_h = max(1, int(rng.integers(size // 3, max(size // 3 + 1, 2 * size // 3))))
        cut_w = max(1, int(rng.integers(size // 3, max(size // 3 + 1, 2 * size // 3))))
        fp[:cut_h, size - cut_w:] = False
        return fp
    raise ConfigInvalid(f"unknown shape kind {kind!r}")


def generate_scene(cfg: SceneConfig):
    """Render one scene: (3-band uint8 image, binary uint8 mask, GeoTransform).

    Deterministic for a fixed config. Dwellings are placed with rejection
    sampling on 1-pixel-dilated bounding boxes, so footprints never touch and
    the mask's 4-connected component count equals the dwelling count.
    """
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width

    base = 90.0 + 20.0 * _smooth_field(rng, h, w, cfg.background_texture_scale)
    tint = rng.uniform(-6.0, 6.0, size=3)
    image = np.stack([base + tint[b] for b in range(3)], axis=-1)

    mask = np.zeros((h, w), dtype=bool)
    occupied = np.zeros((h, w), dtype=bool)
    kinds = ("rectangle", "circle", "lshape")
    lo, hi = cfg.dwelling_size_range
    centers = []
    for i in range(cfg.dwelling_count):
        kind = kinds[int(rng.choice(3, p=cfg.shape_mix))]
        size = int(rng.integers(lo, hi + 1))
        placed = False
        for _ in range(400):
            r0 = int(rng.integers(0, max(1, h - size)))
            c0 = int(rng.integers(0, max(1, w - size)))
            pad_r0, pad_c0 = max(0, r0 - 1), max(0, c0 - 1)
            if occupied[pad_r0:r0 + size + 1, pad_c0:c0 + size + 1].any():
                continue
            fp = _shape_footprint(rng, kind, size)
            mask[r0:r0 + size, c0:c0 + size] |= fp
            occupied[pad_r0:r0 + size + 1, pad_c0:c0 + size + 1] = True
            camouflaged = rng.random() < cfg.camouflage_fraction
            roof = (rng.uniform(75.0, 115.0) if camouflaged
                    else rng.uniform(150.0, 225.0))
            texture = rng.standard_normal((size, size)) * 4.0
            for b in range(3):
                band = image[r0:r0 + size, c0:c0 + size, b]
                band[fp] = roof + texture[fp] + tint[b]
            centers.append((r0 + size // 2, c0 + size // 2, size))
            placed = True
            break
        if not placed:
            raise ConfigInvalid(
                f"could not place dwelling {i + 1}/{cfg.dwelling_count}; "
                "scene too crowded for the configured sizes")

    n_occluders = int(round(cfg.occluder_fraction * cfg.dwelling_count))
    for _ in range(n_occluders):
        if not centers:
            break
        cy, cx, size = centers[int(rng.integers(0, len(centers)))]
        rad = rng.uniform(0.4, 0.9) * size
        oy = cy + rng.uniform(-0.5, 0.5) * size
        ox = cx + rng.uniform(-0.5, 0.5) * size
        yy, xx = np.mgrid[0:h, 0:w]
        wobble = _smooth_field(rng, 1, 360, 8)[0] * 0.25 + 1.0
        ang = np.arctan2(yy - oy, xx - ox)
        idx = ((ang + np.pi) / (2 * np.pi) * 359).astype(int)
        blob = (yy - oy) ** 2 + (xx - ox) ** 2 <= (rad * wobble[idx]) ** 2
        veg = rng.uniform(35.0, 60.0)
        image[blob, 0] = veg * 0.8
        image[blob, 1] = veg * 1.3
        image[blob, 2] = veg * 0.7

    if cfg.noise_sigma > 0:
        image = image + rng.normal(0.0, cfg.noise_sigma, size=image.shape)
    image_u8 = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    mask_u8 = (mask.astype(np.uint8) * 255)[:, :, np.newaxis]

    gt = GeoTransform(500000.0, 4100000.0, 0.5, -0.5, crs_text=SYNTH_CRS)
    return RasterGrid(image_u8), RasterGrid(mask_u8), gt


def degrade(image: RasterGrid, factor: int):
    """Box-average downsample by an integer factor that divides both dims."""
    if factor < 2:
        raise ConfigInvalid("degrade factor must be >= 2")
    if image.width % factor or image.height % factor:
        raise IndivisibleDimensions(
            f"{image.width}x{image.height} not divisible by {factor}")
    arr = image.pixels.astype(np.float64)
    h, w, b = arr.shape
    blocks = arr.reshape(h // factor, factor, w // factor, factor, b)
    means = blocks.mean(axis=(1, 3))
    if image.sample_type == "float32":
        return RasterGrid(means.astype(np.float32))
    full = 255 if image.sample_type == "uint8" else 65535
    return RasterGrid(np.clip(np.rint(means), 0, full).astype(image.pixels.dtype))


def expected_foreground_fraction(cfg: SceneConfig) -> float:
    """Analytic estimate of mask foreground share implied by the config."""
    lo, hi = cfg.dwelling_size_range
    mean_s = (lo + hi) / 2.0
    mean_s2 = (lo * lo + lo * hi + hi * hi) / 3.0
    rect = (0.75 * mean_s) ** 2          # sides drawn from U[size/2, size]
    circle = np.pi / 4.0 * mean_s2
    lshape = 0.75 * mean_s2              # square minus one ~quarter cut
    mix = cfg.shape_mix
    area = mix[0] * rect + mix[1] * circle + mix[2] * lshape
    return cfg.dwelling_count * area / float(cfg.width * cfg.height)
