"""Declarative pipeline configuration: one INI file drives every command.

The whole file is parsed and validated before any work starts, so a typo
fails fast instead of three stages into a long run.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .errors import ConfigInvalid
from .nn.models import EncoderConfig
from .synthcamp import SceneConfig
from .tiler import AUGMENT_OPS, ROLES, RegionSpec
from .trainer import TrainConfig
from .upscale import EdsrConfig

UPSCALE_METHODS = ("none", "nearest", "bilinear", "edsr")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    out_dir: str
    scene_source: str                    # "synthetic" | "geotiff"
    scene_cfg: SceneConfig | None
    scene_image: str | None
    scene_mask: str | None
    regions: tuple[RegionSpec, ...]
    patch_size: int
    train_stride: int
    test_stride: int
    edge_policy: str
    upscale_method: str
    upscale_factor: int
    edsr_checkpoint: str | None
    edsr_cfg: EdsrConfig
    edsr_epochs: int
    model_kind: str
    encoder_cfg: EncoderConfig | None
    base_channels: int
    train_cfg: TrainConfig
    train_role: str
    threshold: float


def _get(section, key, cast, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigInvalid(f"missing key {key!r} in [{section.name}]")
        return default
    raw = section[key].strip()
    try:
        if cast is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except ValueError as exc:
        raise ConfigInvalid(f"[{section.name}] {key} = {raw!r}: {exc}") from exc


def load_config(path: str, seed_override: int | None = None,
                out_override: str | None = None) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigInvalid(f"config file {path!r} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}") from exc

    if "run" not in parser:
        raise ConfigInvalid("config needs a [run] section")
    run = parser["run"]
    seed = seed_override if seed_override is not None else _get(run, "seed", int, 0)
    out_dir = out_override or _get(run, "out_dir", str, required=True)

    if "scene" not in parser:
        raise ConfigInvalid("config needs a [scene] section")
    sc = parser["scene"]
    source = _get(sc, "source", str, required=True)
    scene_cfg = scene_image = scene_mask = None
    if source == "synthetic":
        mix = tuple(float(x) for x in _get(sc, "shape_mix", str, "0.5 0.3 0.2").split())
        if len(mix) != 3:
            raise ConfigInvalid("shape_mix needs exactly 3 fractions")
        scene_cfg = SceneConfig(
            width=_get(sc, "width", int, 512),
            height=_get(sc, "height", int, 512),
            dwelling_count=_get(sc, "dwelling_count", int, 60),
            dwelling_size_range=(_get(sc, "dwelling_size_min", int, 8),
                                 _get(sc, "dwelling_size_max", int, 22)),
            shape_mix=mix,
            background_texture_scale=_get(sc, "background_texture_scale", int, 32),
            occluder_fraction=_get(sc, "occluder_fraction", float, 0.1),
            noise_sigma=_get(sc, "noise_sigma", float, 6.0),
            camouflage_fraction=_get(sc, "camouflage_fraction", float, 0.1),
            seed=seed,
        )
    elif source == "geotiff":
        scene_image = _get(sc, "image", str, required=True)
        scene_mask = _get(sc, "mask", str)
        if not os.path.exists(scene_image):
            raise ConfigInvalid(f"scene image {scene_image!r} does not exist")
        if scene_mask and not os.path.exists(scene_mask):
            raise ConfigInvalid(f"scene mask {scene_mask!r} does not exist")
    else:
        raise ConfigInvalid(f"scene source {source!r} not synthetic/geotiff")

    regions = []
    for name in parser.sections():
        if not name.startswith("region:"):
            continue
        sec = parser[name]
        window = tuple(int(x) for x in _get(sec, "window", str, required=True).split())
        if len(window) != 4:
            raise ConfigInvalid(f"[{name}] window needs 4 integers")
        role = _get(sec, "role", str, required=True)
        if role not in ROLES:
            raise ConfigInvalid(f"[{name}] role {role!r} not one of {ROLES}")
        regions.append(RegionSpec(name.split(":", 1)[1], role, window))
    if not regions:
        raise ConfigInvalid("at least one [region:<name>] section is required")

    tile = parser["tile"] if "tile" in parser else parser["run"]
    patch_size = _get(tile, "patch_size", int, 128)
    train_stride = _get(tile, "train_stride", int, max(1, patch_size // 2))
    test_stride = _get(tile, "test_stride", int, max(1, patch_size * 7 // 8))
    edge_policy = _get(tile, "edge_policy", str, "snap")

    up = parser["upscale"] if "upscale" in parser else {}
    upscale_method = up.get("method", "none").strip() if up else "none"
    if upscale_method not in UPSCALE_METHODS:
        raise ConfigInvalid(f"upscale method {upscale_method!r} not in {UPSCALE_METHODS}")
    upscale_factor = int(up.get("factor", "4")) if up else 4
    edsr_checkpoint = up.get("checkpoint", "").strip() or None if up else None
    edsr_cfg = EdsrConfig(
        feature_channels=int(up.get("feature_channels", "16")) if up else 16,
        residual_blocks=int(up.get("residual_blocks", "8")) if up else 8,
        residual_scaling=float(up.get("residual_scaling", "1.0")) if up else 1.0,
    )
    edsr_epochs = int(up.get("epochs", "12")) if up else 12
    if upscale_method == "edsr" and upscale_factor != 4:
        raise ConfigInvalid("the learned upscaler supports factor 4 only")

    model = parser["model"] if "model" in parser else {}
    model_kind = model.get("kind", "adapter").strip() if model else "adapter"
    if model_kind not in ("adapter", "unet"):
        raise ConfigInvalid(f"model kind {model_kind!r} not adapter/unet")
    model_input = patch_size * (upscale_factor if upscale_method != "none" else 1)
    encoder_cfg = None
    if model_kind == "adapter":
        glb = model.get("global_layers", "").split() if model else []
        depth = int(model.get("depth", "4")) if model else 4
        encoder_cfg = EncoderConfig(
            image_size=int(model.get("image_size", str(model_input))) if model else model_input,
            patch_embed_size=int(model.get("patch_embed_size", "8")) if model else 8,
            embed_dim=int(model.get("embed_dim", "64")) if model else 64,
            depth=depth,
            heads=int(model.get("heads", "4")) if model else 4,
            window_size=int(model.get("window_size", "4")) if model else 4,
            global_attention_layers=tuple(int(x) for x in glb) if glb else (1, 3),
            adapter_tune_dim=int(model.get("adapter_tune_dim", "16")) if model else 16,
        )
    base_channels = int(model.get("base_channels", "16")) if model else 16

    tr = parser["train"] if "train" in parser else {}
    augment = tuple(tr.get("augment", "").split()) if tr else ()
    for op in augment:
        if op not in AUGMENT_OPS:
            raise ConfigInvalid(f"augment op {op!r} not one of {AUGMENT_OPS}")
    train_cfg = TrainConfig(
        epochs=int(tr.get("epochs", "15")) if tr else 15,
        batch_size=int(tr.get("batch_size", "1" if model_kind == "adapter" else "8")) if tr
        else (1 if model_kind == "adapter" else 8),
        seed=seed,
        lr_init=float(tr.get("lr_init", "2e-4")) if tr else 2e-4,
        lr_min=float(tr.get("lr_min", "1e-7")) if tr else 1e-7,
        schedule=(tr.get("schedule", "cosine" if model_kind == "adapter" else "plateau").strip()
                  if tr else ("cosine" if model_kind == "adapter" else "plateau")),
        plateau_patience=int(tr.get("plateau_patience", "5")) if tr else 5,
        plateau_factor=float(tr.get("plateau_factor", "0.2")) if tr else 0.2,
        freeze_encoder=_parse_bool(tr.get("freeze_encoder", "true")) if tr else True,
        augment_ops=augment,
        loss_iou_weight=float(tr.get("loss_iou_weight", "1.0")) if tr else 1.0,
    )
    train_role = (tr.get("train_role", "train_large").strip() if tr else "train_large")
    if train_role not in ("train_large", "train_small"):
        raise ConfigInvalid(f"train_role {train_role!r} must be a train role")

    st = parser["stitch"] if "stitch" in parser else {}
    threshold = float(st.get("threshold", "0.5")) if st else 0.5

    return PipelineConfig(
        seed=seed, out_dir=out_dir, scene_source=source, scene_cfg=scene_cfg,
        scene_image=scene_image, scene_mask=scene_mask, regions=tuple(regions),
        patch_size=patch_size, train_stride=train_stride, test_stride=test_stride,
        edge_policy=edge_policy, upscale_method=upscale_method,
        upscale_factor=upscale_factor, edsr_checkpoint=edsr_checkpoint,
        edsr_cfg=edsr_cfg, edsr_epochs=edsr_epochs, model_kind=model_kind,
        encoder_cfg=encoder_cfg, base_channels=base_channels,
        train_cfg=train_cfg, train_role=train_role, threshold=threshold,
    )


def _parse_bool(raw: str) -> bool:
    raw = raw.strip().lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigInvalid(f"not a boolean: {raw!r}")
