"""Command-line pipeline: prepare | upscale | train | eval | infer | vectorize | report.

Each subcommand is a thin orchestration over the library modules and is
idempotent for a fixed config and seed: outputs land under the configured
output directory with deterministic bytes (wall-clock columns excepted).
Diagnostics go to stderr; results go to files; exit status 0 means success.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import PipelineConfig, load_config
from .errors import CampsegError, ConfigInvalid
from .geotiff import read_geotiff, write_geotiff
from .metrics import accumulate, all_metrics, write_metrics_csv
from .nn import load_checkpoint, save_checkpoint
from .raster import RasterGrid, GeoTransform
from .stitch import StitchSpec, binarize, sliding_inference
from .synthcamp import degrade, generate_scene
from .tiler import PatchRecord, RegionSpec, TileSpec, augment, extract_patches
from .trainer import PatchSets, read_epoch_csv, train, write_epoch_csv
from .upscale import edsr_forward, fit_edsr, upscale_bilinear, upscale_nearest
from .vectorize import trace_polygons, write_shapefile

MANIFEST = "manifest.txt"


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _regions_overlap(a: RegionSpec, b: RegionSpec) -> bool:
    ac, ar, aw, ah = a.window
    bc, br, bw, bh = b.window
    return ac < bc + bw and bc < ac + aw and ar < br + bh and br < ar + ah


def _load_scene(cfg: PipelineConfig):
    scene_dir = _ensure_dir(os.path.join(cfg.out_dir, "scene"))
    if cfg.scene_source == "synthetic":
        image, mask, gt = generate_scene(cfg.scene_cfg)
        write_geotiff(image, gt, os.path.join(scene_dir, "scene_image.tif"))
        write_geotiff(mask, gt, os.path.join(scene_dir, "scene_mask.tif"))
        return image, mask, gt
    image, gt = read_geotiff(cfg.scene_image)
    mask = None
    if cfg.scene_mask:
        mask, _ = read_geotiff(cfg.scene_mask)
    return image, mask, gt


def cmd_prepare(cfg: PipelineConfig) -> int:
    image, mask, gt = _load_scene(cfg)
    for i, a in enumerate(cfg.regions):
        a.validate_inside(image)
        for b in cfg.regions[i + 1:]:
            if a.role != b.role and _regions_overlap(a, b):
                raise ConfigInvalid(f"regions {a.name!r} ({a.role}) and "
                                    f"{b.name!r} ({b.role}) overlap")

    patches_dir = _ensure_dir(os.path.join(cfg.out_dir, "patches"))
    scene_dir = _ensure_dir(os.path.join(cfg.out_dir, "scene"))
    lines = ["# index role region col row size aug"]
    counter = 0
    for region in cfg.regions:
        if region.role == "test":
            c, r, w, h = region.window
            crop = image.window(c, r, w, h)
            write_geotiff(crop, gt.translate(c, r),
                          os.path.join(scene_dir, f"{region.name}_image.tif"))
            if mask is not None:
                write_geotiff(mask.window(c, r, w, h), gt.translate(c, r),
                              os.path.join(scene_dir, f"{region.name}_mask.tif"))
            _log(f"prepare: test region {region.name!r} cropped ({w}x{h})")
            continue
        spec = TileSpec(cfg.patch_size, cfg.train_stride, cfg.edge_policy)
        records = extract_patches(image, gt, region, spec, mask)
        expanded: list[tuple[PatchRecord, str]] = []
        if region.role in ("train_large", "train_small") and cfg.train_cfg.augment_ops:
            for k, rec in enumerate(records):
                group = augment(rec, set(cfg.train_cfg.augment_ops),
                                seed=cfg.seed + k)
                expanded.append((group[0], "none"))
                ops_sorted = [op for op in
                              ("rot90", "rot180", "rot270", "hflip", "vflip",
                               "brightness_contrast")
                              if op in cfg.train_cfg.augment_ops]
                for op, aug_rec in zip(ops_sorted, group[1:]):
                    expanded.append((aug_rec, op))
        else:
            expanded = [(rec, "none") for rec in records]

        role_dir = _ensure_dir(os.path.join(patches_dir, region.role))
        for rec, op in expanded:
            write_geotiff(rec.image, rec.geo,
                          os.path.join(role_dir, f"image_{counter:05d}.tif"))
            if rec.mask is not None:
                write_geotiff(rec.mask, rec.geo,
                              os.path.join(role_dir, f"mask_{counter:05d}.tif"))
            c, r, s, _ = rec.window
            lines.append(f"{counter} {region.role} {rec.parent_region} "
                         f"{c} {r} {s} {op}")
            counter += 1
        _log(f"prepare: region {region.name!r} -> {len(expanded)} patches")
    with open(os.path.join(patches_dir, MANIFEST), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _log(f"prepare: {counter} patches total")
    return 0


def _read_manifest(patches_dir: str):
    path = os.path.join(patches_dir, MANIFEST)
    if not os.path.exists(path):
        raise ConfigInvalid(f"no manifest at {path}; run prepare first")
    entries = []
    for line in open(path):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        idx, role, region, c, r, s, op = line.split()
        entries.append((int(idx), role, region, int(c), int(r), int(s), op))
    return entries


def _load_patches(patches_dir: str):
    by_role: dict[str, list[PatchRecord]] = {}
    for idx, role, region, c, r, s, _op in _read_manifest(patches_dir):
        role_dir = os.path.join(patches_dir, role)
        img, geo = read_geotiff(os.path.join(role_dir, f"image_{idx:05d}.tif"))
        mask_path = os.path.join(role_dir, f"mask_{idx:05d}.tif")
        mask = read_geotiff(mask_path)[0] if os.path.exists(mask_path) else None
        by_role.setdefault(role, []).append(
            PatchRecord(region, (c, r, img.width, img.height), img, geo, mask))
    return by_role


def _edsr_checkpoint(cfg: PipelineConfig):
    path = cfg.edsr_checkpoint or os.path.join(cfg.out_dir, "edsr.ckpt")
    if os.path.exists(path):
        _log(f"upscale: loading SR checkpoint {path}")
        return load_checkpoint(path)
    _log("upscale: no SR checkpoint found, training one on degraded patch pairs")
    entries = _read_manifest(os.path.join(cfg.out_dir, "patches"))
    pairs = []
    for idx, role, _region, _c, _r, _s, op in entries:
        if role not in ("train_large", "train_small") or op != "none":
            continue
        img, _ = read_geotiff(os.path.join(cfg.out_dir, "patches", role,
                                           f"image_{idx:05d}.tif"))
        pairs.append((degrade(img, cfg.upscale_factor), img))
    ckpt = fit_edsr(pairs, cfg.edsr_cfg, epochs=cfg.edsr_epochs, seed=cfg.seed,
                    on_epoch=lambda e, l: _log(f"  sr epoch {e}: l1 {l:.5f}"))
    save_checkpoint(ckpt, path)
    _log(f"upscale: SR checkpoint saved to {path}")
    return ckpt


def _upscale_image(cfg: PipelineConfig, grid, sr_ckpt):
    if cfg.upscale_method == "nearest":
        return upscale_nearest(grid, cfg.upscale_factor)
    if cfg.upscale_method == "bilinear":
        return upscale_bilinear(grid, cfg.upscale_factor)
    return edsr_forward(grid, sr_ckpt, cfg.edsr_cfg)


def cmd_upscale(cfg: PipelineConfig) -> int:
    if cfg.upscale_method == "none":
        _log("upscale: method is 'none', nothing to do")
        return 0
    sr_ckpt = _edsr_checkpoint(cfg) if cfg.upscale_method == "edsr" else None
    src_dir = os.path.join(cfg.out_dir, "patches")
    dst_dir = _ensure_dir(os.path.join(cfg.out_dir, "patches_up"))
    lines = ["# index role region col row size aug"]
    for idx, role, region, c, r, s, op in _read_manifest(src_dir):
        role_dir = os.path.join(src_dir, role)
        img, geo = read_geotiff(os.path.join(role_dir, f"image_{idx:05d}.tif"))
        up = _upscale_image(cfg, img, sr_ckpt)
        out_role = _ensure_dir(os.path.join(dst_dir, role))
        up_geo = geo.scaled(cfg.upscale_factor)
        write_geotiff(up, up_geo, os.path.join(out_role, f"image_{idx:05d}.tif"))
        mask_path = os.path.join(role_dir, f"mask_{idx:05d}.tif")
        if os.path.exists(mask_path):
            mask, _ = read_geotiff(mask_path)
            write_geotiff(upscale_nearest(mask, cfg.upscale_factor), up_geo,
                          os.path.join(out_role, f"mask_{idx:05d}.tif"))
        lines.append(f"{idx} {role} {region} {c} {r} {s * cfg.upscale_factor} {op}")
    with open(os.path.join(dst_dir, MANIFEST), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    scene_dir = os.path.join(cfg.out_dir, "scene")
    scene_up = _ensure_dir(os.path.join(cfg.out_dir, "scene_up"))
    for region in cfg.regions:
        if region.role != "test":
            continue
        img_path = os.path.join(scene_dir, f"{region.name}_image.tif")
        if not os.path.exists(img_path):
            raise ConfigInvalid(f"missing test crop {img_path}; run prepare first")
        img, geo = read_geotiff(img_path)
        up_geo = geo.scaled(cfg.upscale_factor)
        write_geotiff(_upscale_image(cfg, img, sr_ckpt), up_geo,
                      os.path.join(scene_up, f"{region.name}_image.tif"))
        mask_path = os.path.join(scene_dir, f"{region.name}_mask.tif")
        if os.path.exists(mask_path):
            mask, _ = read_geotiff(mask_path)
            write_geotiff(upscale_nearest(mask, cfg.upscale_factor), up_geo,
                          os.path.join(scene_up, f"{region.name}_mask.tif"))
        _log(f"upscale: test region {region.name!r} upscaled x{cfg.upscale_factor}")
    _log(f"upscale: method {cfg.upscale_method}, factor {cfg.upscale_factor}")
    return 0


def _patch_source(cfg: PipelineConfig) -> str:
    up = os.path.join(cfg.out_dir, "patches_up")
    if os.path.exists(os.path.join(up, MANIFEST)):
        return up
    return os.path.join(cfg.out_dir, "patches")


def cmd_train(cfg: PipelineConfig) -> int:
    src = _patch_source(cfg)
    _log(f"train: reading patches from {src}")
    by_role = _load_patches(src)
    train_patches = by_role.get(cfg.train_role, [])
    val_patches = by_role.get("validation", [])
    data = PatchSets(train=train_patches, val=val_patches)
    logs, best, last = train(cfg.model_kind, data, cfg.train_cfg,
                             encoder_cfg=cfg.encoder_cfg)
    save_checkpoint(best, os.path.join(cfg.out_dir, "best.ckpt"))
    save_checkpoint(last, os.path.join(cfg.out_dir, "last.ckpt"))
    write_epoch_csv(logs, os.path.join(cfg.out_dir, "epochs.csv"))
    best_epoch = int(best.meta["epoch"])
    _log(f"train: {len(logs)} epochs, best val_iou "
         f"{best.meta['val_metric']:.4f} at epoch {best_epoch}")
    return 0


def _test_scene_paths(cfg: PipelineConfig, region: RegionSpec):
    scene_dir = "scene_up" if cfg.upscale_method != "none" else "scene"
    base = os.path.join(cfg.out_dir, scene_dir)
    return (os.path.join(base, f"{region.name}_image.tif"),
            os.path.join(base, f"{region.name}_mask.tif"))


def cmd_infer(cfg: PipelineConfig, checkpoint: str | None = None) -> int:
    ckpt_path = checkpoint or os.path.join(cfg.out_dir, "best.ckpt")
    ckpt = load_checkpoint(ckpt_path)
    masks_dir = _ensure_dir(os.path.join(cfg.out_dir, "masks"))
    model_patch = int(ckpt.meta["cfg.image_size"])
    spec = StitchSpec(TileSpec(model_patch, min(cfg.test_stride, model_patch)),
                      threshold=cfg.threshold)
    did_any = False
    for region in cfg.regions:
        if region.role != "test":
            continue
        img_path, _ = _test_scene_paths(cfg, region)
        if not os.path.exists(img_path):
            raise ConfigInvalid(f"missing test scene {img_path}; run prepare"
                                f"{' and upscale' if cfg.upscale_method != 'none' else ''}")
        image, geo = read_geotiff(img_path)
        logits = sliding_inference(image, ckpt, spec)
        mask = binarize(logits, cfg.threshold)
        out = os.path.join(masks_dir, f"{region.name}_pred.tif")
        write_geotiff(mask, geo, out)
        _log(f"infer: {region.name!r} -> {out}")
        did_any = True
    if not did_any:
        raise ConfigInvalid("no test regions configured")
    return 0


def cmd_eval(cfg: PipelineConfig, pred: str | None = None,
             truth: str | None = None) -> int:
    rows = []
    if pred or truth:
        if not (pred and truth):
            raise ConfigInvalid("--pred and --truth must be given together")
        jobs = [("custom", pred, truth)]
    else:
        jobs = []
        for region in cfg.regions:
            if region.role != "test":
                continue
            pred_path = os.path.join(cfg.out_dir, "masks", f"{region.name}_pred.tif")
            _, truth_path = _test_scene_paths(cfg, region)
            jobs.append((region.name, pred_path, truth_path))
    for name, pred_path, truth_path in jobs:
        for p in (pred_path, truth_path):
            if not os.path.exists(p):
                raise ConfigInvalid(f"missing raster {p}")
        pred_grid, _ = read_geotiff(pred_path)
        truth_grid, _ = read_geotiff(truth_path)
        counts = accumulate(pred_grid, truth_grid)
        try:
            metrics = all_metrics(counts)
        except CampsegError:
            metrics = {"iou": None, "f1": None, "precision": None, "recall": None}
        rows.append({"scene": name, "model": cfg.model_kind, "dataset": "test",
                     **metrics})
        shown = {k: (f"{v:.4f}" if v is not None else "NA")
                 for k, v in metrics.items()}
        _log(f"eval: {name}: {shown}")
    out = os.path.join(cfg.out_dir, "metrics.csv")
    write_metrics_csv(rows, out)
    _log(f"eval: wrote {out}")
    return 0


def cmd_vectorize(cfg: PipelineConfig, mask: str | None = None) -> int:
    vec_dir = _ensure_dir(os.path.join(cfg.out_dir, "vectors"))
    if mask:
        jobs = [(os.path.splitext(os.path.basename(mask))[0], mask)]
    else:
        jobs = [(f"{r.name}_pred",
                 os.path.join(cfg.out_dir, "masks", f"{r.name}_pred.tif"))
                for r in cfg.regions if r.role == "test"]
    if not jobs:
        raise ConfigInvalid("nothing to vectorize")
    for name, mask_path in jobs:
        if not os.path.exists(mask_path):
            raise ConfigInvalid(f"missing mask {mask_path}; run infer first")
        grid, geo = read_geotiff(mask_path)
        features = trace_polygons(grid, geo)
        base = os.path.join(vec_dir, name)
        write_shapefile(features, geo.crs_text, base)
        _log(f"vectorize: {len(features)} features -> {base}.shp")
    return 0


def cmd_report(cfg: PipelineConfig) -> int:
    csv_path = os.path.join(cfg.out_dir, "epochs.csv")
    if not os.path.exists(csv_path):
        raise ConfigInvalid(f"no epoch log at {csv_path}; run train first")
    logs = read_epoch_csv(csv_path)
    best = max(range(len(logs)), key=lambda i: logs[i].val_iou)
    lines = ["epoch  val_iou  val_f1  val_prec  val_rec  lr        flag",
             "-" * 60]
    for i, log in enumerate(logs):
        flag = "<- max IoU" if i == best else ""
        lines.append(f"{log.epoch:>5d}  {log.val_iou:.3f}    {log.val_f1:.3f}"
                     f"   {log.val_precision:.3f}     {log.val_recall:.3f}"
                     f"    {log.lr:.2e}  {flag}")
    lines.append("")
    lines.append(f"peak validation IoU {logs[best].val_iou:.3f} at epoch "
                 f"{logs[best].epoch} of {len(logs) - 1}")
    if best == 0 and len(logs) > 1:
        lines.append("note: peak reached in the first epoch")
    out = os.path.join(cfg.out_dir, "report.txt")
    with open(out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _log(f"report: wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="campseg",
        description="dwelling-footprint extraction pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("prepare", "upscale", "train", "eval", "infer", "vectorize",
                 "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline config file")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory override")
        if name == "infer":
            p.add_argument("--checkpoint", default=None)
        if name == "eval":
            p.add_argument("--pred", default=None)
            p.add_argument("--truth", default=None)
        if name == "vectorize":
            p.add_argument("--mask", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        _ensure_dir(cfg.out_dir)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "upscale":
            return cmd_upscale(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "infer":
            return cmd_infer(cfg, args.checkpoint)
        if args.command == "eval":
            return cmd_eval(cfg, args.pred, args.truth)
        if args.command == "vectorize":
            return cmd_vectorize(cfg, args.mask)
        if args.command == "report":
            return cmd_report(cfg)
        raise ConfigInvalid(f"unknown command {args.command!r}")
    except CampsegError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
