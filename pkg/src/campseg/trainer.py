"""Training driver: epoch loop, LR schedules, validation, best-model pick.

One driver owns one checkpoint. Mini-batches are seeded shuffles; gradients
accumulate over the batch in a fixed order, so a fixed seed reproduces the
loss trajectory bit for bit. After every epoch the full validation set is
scored and the checkpoint with the best validation IoU (earliest epoch on
ties) is kept aside.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigInvalid, EmptyDataset, ShapeMismatch
from .metrics import ConfusionCounts, all_metrics
from .nn import (EncoderConfig, ModelCheckpoint, Tensor, adamw_step,
                 adapter_model_forward, backward, init_adapter_checkpoint,
                 init_unet_checkpoint, loss_bce_soft_iou, no_grad,
                 unet_baseline_forward)
from .stitch import _to_model_input
from .tiler import PatchRecord

MODEL_KINDS = ("adapter", "unet")
IMPROVE_EPS = 1e-4  # matches the rounding granularity of reported metrics


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 1
    seed: int = 0
    optimizer: str = "adamw"
    lr_init: float = 2e-4
    lr_min: float = 1e-7
    schedule: str = "cosine"
    plateau_patience: int = 5
    plateau_factor: float = 0.2
    freeze_encoder: bool = True
    augment_ops: tuple[str, ...] = ()
    loss_iou_weight: float = 1.0
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigInvalid("epochs must be >= 1")
        if self.lr_min > self.lr_init:
            raise ConfigInvalid("lr_min must not exceed lr_init")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ConfigInvalid("plateau_factor must lie in (0, 1)")
        if self.schedule not in ("cosine", "plateau"):
            raise ConfigInvalid("schedule must be 'cosine' or 'plateau'")
        if self.optimizer not in ("adamw", "radam-substitute:adamw"):
            raise ConfigInvalid("optimizer must be adamw (or its radam substitute)")
        if self.batch_size < 1:
            raise ConfigInvalid("batch_size must be >= 1")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_iou: float
    val_f1: float
    val_precision: float
    val_recall: float
    lr: float
    wall_time: float


class PatchSets(NamedTuple):
    train: list[PatchRecord]
    val: list[PatchRecord]


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """Endpoint-pinned cosine: lr(0) = lr_init, lr(epochs-1) = lr_min."""
    if not 0 <= epoch < cfg.epochs:
        raise ConfigInvalid(f"epoch {epoch} outside schedule of {cfg.epochs}")
    if cfg.epochs == 1:
        return cfg.lr_init
    t = epoch / (cfg.epochs - 1)
    return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + math.cos(math.pi * t))


@dataclass(frozen=True)
class PlateauState:
    lr: float
    best_metric: float = -math.inf
    stall: int = 0


def plateau_lr(state: PlateauState, new_metric: float, cfg: TrainConfig):
    """Reduce-on-plateau step for a higher-is-better metric.

    After plateau_patience consecutive epochs without an improvement greater
    than IMPROVE_EPS the rate is multiplied by plateau_factor (floored at
    lr_min) and the stall counter resets.
    """
    if new_metric > state.best_metric + IMPROVE_EPS:
        return replace(state, best_metric=new_metric, stall=0), state.lr
    stall = state.stall + 1
    if stall >= cfg.plateau_patience:
        new_lr = max(state.lr * cfg.plateau_factor, cfg.lr_min)
        return replace(state, stall=0, lr=new_lr), new_lr
    return replace(state, stall=stall), state.lr


def _forward(kind: str, image: Tensor, ckpt: ModelCheckpoint, enc_cfg):
    if kind == "adapter":
        return adapter_model_forward(image, ckpt, enc_cfg)
    return unet_baseline_forward(image, ckpt)


def _target_tensor(patch: PatchRecord) -> Tensor:
    mask = patch.mask.pixels[:, :, 0]
    return Tensor((mask == 255).astype(np.float32)[np.newaxis])


def _validate(kind: str, ckpt: ModelCheckpoint, enc_cfg,
              patches: list[PatchRecord]) -> dict[str, float]:
    counts = ConfusionCounts()
    with no_grad():
        for patch in patches:
            logits = _forward(kind, Tensor(_to_model_input(patch.image.pixels)),
                              ckpt, enc_cfg).values
            pred = (logits[0] >= 0.0)  # sigmoid >= 0.5
            truth = patch.mask.pixels[:, :, 0] == 255
            counts = counts + ConfusionCounts(
                tp=int(np.count_nonzero(pred & truth)),
                fp=int(np.count_nonzero(pred & ~truth)),
                fn=int(np.count_nonzero(~pred & truth)),
                tn=int(np.count_nonzero(~pred & ~truth)))
    # with zero true positives, precision or F1 can lose their denominators;
    # for epoch logs that state scores 0 (the report module itself stays strict)
    if counts.tp == 0:
        return {"iou": iou_from(counts), "f1": 0.0, "precision": 0.0,
                "recall": recall_from(counts)}
    return all_metrics(counts)


def iou_from(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fp + c.fn) if c.tp + c.fp + c.fn else 0.0


def recall_from(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def init_model(model_kind: str, patch_size: int, seed: int,
               freeze_encoder: bool = True,
               encoder_cfg: EncoderConfig | None = None):
    """Fresh checkpoint + encoder config (None for the baseline)."""
    if model_kind == "adapter":
        cfg = encoder_cfg or EncoderConfig(image_size=patch_size)
        if cfg.image_size != patch_size:
            raise ShapeMismatch(f"model expects {cfg.image_size}px patches, "
                                f"data provides {patch_size}px")
        ckpt = init_adapter_checkpoint(cfg, seed=seed, freeze_encoder=freeze_encoder)
        return ckpt, cfg
    if model_kind == "unet":
        return init_unet_checkpoint(seed=seed, image_size=patch_size), None
    raise ConfigInvalid(f"model kind {model_kind!r} not one of {MODEL_KINDS}")


def train(model_kind: str, data: PatchSets, cfg: TrainConfig,
          encoder_cfg: EncoderConfig | None = None,
          on_batch: Callable[[int, int, float], None] | None = None):
    """Run the full budget; returns (epoch logs, best checkpoint, last checkpoint)."""
    if not data.train:
        raise EmptyDataset("no training patches")
    if not data.val:
        raise EmptyDataset("no validation patches")
    for p in data.train + data.val:
        if p.mask is None:
            raise EmptyDataset(f"patch from region {p.parent_region!r} has no mask")
    if not any((p.mask.pixels == 255).any() for p in data.val):
        raise EmptyDataset("validation patches contain no foreground pixels")

    patch_size = data.train[0].image.width
    for p in data.train + data.val:
        if p.image.width != patch_size or p.image.height != patch_size:
            raise ShapeMismatch("all patches must share one square size")

    ckpt, enc_cfg = init_model(model_kind, patch_size, cfg.seed,
                               cfg.freeze_encoder, encoder_cfg)
    if model_kind == "adapter" and not cfg.freeze_encoder:
        for name in ckpt.names("enc."):
            ckpt.set_frozen(name, False)

    rng = np.random.default_rng(cfg.seed)
    inputs = [_to_model_input(p.image.pixels) for p in data.train]
    targets = [_target_tensor(p) for p in data.train]

    logs: list[EpochLog] = []
    best_ckpt = None
    best_iou = -1.0
    plateau = PlateauState(lr=cfg.lr_init)
    lr = cfg.lr_init

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        epoch_lr = cosine_lr(epoch, cfg) if cfg.schedule == "cosine" else lr
        order = rng.permutation(len(inputs))
        total_loss = 0.0
        for b0 in range(0, len(order), cfg.batch_size):
            batch = order[b0:b0 + cfg.batch_size]
            ckpt.zero_grad()
            loss_sum = None
            for idx in batch:
                logits = _forward(model_kind, Tensor(inputs[idx]), ckpt, enc_cfg)
                loss = loss_bce_soft_iou(logits, targets[idx], cfg.loss_iou_weight)
                loss_sum = loss if loss_sum is None else loss_sum + loss
            batch_loss = loss_sum * (1.0 / len(batch))
            backward(batch_loss)
            adamw_step(ckpt, lr=epoch_lr, weight_decay=cfg.weight_decay)
            val = batch_loss.item()
            total_loss += val * len(batch)
            if on_batch is not None:
                on_batch(epoch, b0 // cfg.batch_size, val)

        val_metrics = _validate(model_kind, ckpt, enc_cfg, data.val)
        if cfg.schedule == "plateau":
            plateau, lr = plateau_lr(plateau, val_metrics["iou"], cfg)
        wall = time.perf_counter() - t0
        logs.append(EpochLog(epoch=epoch,
                             train_loss=total_loss / len(inputs),
                             val_iou=val_metrics["iou"],
                             val_f1=val_metrics["f1"],
                             val_precision=val_metrics["precision"],
                             val_recall=val_metrics["recall"],
                             lr=epoch_lr,
                             wall_time=wall))
        ckpt.meta["epoch"] = float(epoch)
        ckpt.meta["val_metric"] = float(val_metrics["iou"])
        ckpt.meta["seed"] = float(cfg.seed)
        if val_metrics["iou"] > best_iou:
            best_iou = val_metrics["iou"]
            best_ckpt = ckpt.clone()
    return logs, best_ckpt, ckpt


def write_epoch_csv(logs: list[EpochLog], path: str) -> None:
    cols = ["epoch", "train_loss", "val_iou", "val_f1", "val_precision",
            "val_recall", "lr", "wall_time"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for log in logs:
            writer.writerow([log.epoch, f"{log.train_loss:.6f}",
                             f"{log.val_iou:.6f}", f"{log.val_f1:.6f}",
                             f"{log.val_precision:.6f}", f"{log.val_recall:.6f}",
                             f"{log.lr:.3e}", f"{log.wall_time:.3f}"])


def read_epoch_csv(path: str) -> list[EpochLog]:
    logs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            logs.append(EpochLog(epoch=int(row["epoch"]),
                                 train_loss=float(row["train_loss"]),
                                 val_iou=float(row["val_iou"]),
                                 val_f1=float(row["val_f1"]),
                                 val_precision=float(row["val_precision"]),
                                 val_recall=float(row["val_recall"]),
                                 lr=float(row["lr"]),
                                 wall_time=float(row["wall_time"])))
    return logs
