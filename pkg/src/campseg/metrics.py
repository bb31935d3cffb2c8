"""Pixelwise accuracy assessment: confusion counting and the four derived
scores (precision, recall, F1, IoU).

A metric whose denominator is zero raises UndefinedMetric: the value does
not exist and must never silently become 0 or 1 in a report.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NonBinaryInput, ShapeMismatch, UndefinedMetric
from .raster import RasterGrid


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


def _binary_plane(grid: RasterGrid, label: str) -> np.ndarray:
    arr = grid.pixels[:, :, 0] if grid.bands >= 1 else grid.pixels
    vals = np.unique(arr)
    if not set(int(v) for v in vals).issubset({0, 255}):
        raise NonBinaryInput(f"{label} mask holds values other than 0/255: {vals[:8]}")
    return arr == 255


def accumulate(pred: RasterGrid, truth: RasterGrid,
               counts: ConfusionCounts = ConfusionCounts()) -> ConfusionCounts:
    """Add one prediction/truth pair into the running counts."""
    if (pred.width, pred.height) != (truth.width, truth.height):
        raise ShapeMismatch(f"pred {pred.width}x{pred.height} vs "
                            f"truth {truth.width}x{truth.height}")
    p = _binary_plane(pred, "pred")
    t = _binary_plane(truth, "truth")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(np.count_nonzero(~p & ~t))
    return counts + ConfusionCounts(tp, fp, fn, tn)


def precision(c: ConfusionCounts) -> float:
    if c.tp + c.fp == 0:
        raise UndefinedMetric("precision undefined: no predicted positives")
    return c.tp / (c.tp + c.fp)


def recall(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetric("recall undefined: no actual positives")
    return c.tp / (c.tp + c.fn)


def f1(c: ConfusionCounts) -> float:
    p = precision(c)
    r = recall(c)
    if p + r == 0:
        raise UndefinedMetric("f1 undefined: precision + recall is zero")
    return 2.0 * p * r / (p + r)


def iou(c: ConfusionCounts) -> float:
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        raise UndefinedMetric("iou undefined: no positives anywhere")
    return c.tp / denom


def all_metrics(c: ConfusionCounts) -> dict[str, float]:
    """iou/f1/precision/recall in one dict; UndefinedMetric propagates."""
    return {"iou": iou(c), "f1": f1(c), "precision": precision(c),
            "recall": recall(c)}


def write_metrics_csv(rows: list[dict], path: str) -> None:
    """Report rows as CSV in the column order (scene, model, dataset, iou,
    f1, precision, recall); undefined metrics appear as 'NA'."""
    cols = ["scene", "model", "dataset", "iou", "f1", "precision", "recall"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            out = []
            for col in cols:
                v = row.get(col)
                if isinstance(v, float):
                    out.append(f"{v:.6f}")
                else:
                    out.append("NA" if v is None else str(v))
            writer.writerow(out)
