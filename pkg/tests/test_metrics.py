import numpy as np
import pytest

from campseg.errors import NonBinaryInput, ShapeMismatch, UndefinedMetric
from campseg.metrics import (ConfusionCounts, accumulate, all_metrics, f1,
                             iou, precision, recall, write_metrics_csv)
from campseg.raster import RasterGrid


def as_mask(arr):
    return RasterGrid((np.asarray(arr, dtype=np.uint8) * 255))


def test_perfect_prediction():
    truth = as_mask([[1, 0], [1, 1]])
    c = accumulate(truth, truth)
    assert (c.tp, c.fp, c.fn, c.tn) == (3, 0, 0, 1)


def test_all_background_prediction():
    pred = as_mask([[0, 0], [0, 0]])
    truth = as_mask([[1, 1], [0, 1]])
    c = accumulate(pred, truth)
    assert (c.tp, c.fp, c.fn, c.tn) == (0, 0, 3, 1)


def test_random_pair_matches_scalar_loop():
    rng = np.random.default_rng(2)
    p = (rng.random((16, 16)) > 0.5).astype(np.uint8)
    t = (rng.random((16, 16)) > 0.5).astype(np.uint8)
    c = accumulate(as_mask(p), as_mask(t))
    tp = fp = fn = tn = 0
    for i in range(16):
        for j in range(16):
            if p[i, j] and t[i, j]:
                tp += 1
            elif p[i, j]:
                fp += 1
            elif t[i, j]:
                fn += 1
            else:
                tn += 1
    assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)
    assert c.total == 256


def test_accumulate_associative():
    rng = np.random.default_rng(3)
    tiles = [(as_mask(rng.random((8, 8)) > 0.5), as_mask(rng.random((8, 8)) > 0.5))
             for _ in range(6)]
    c_fwd = ConfusionCounts()
    for p, t in tiles:
        c_fwd = accumulate(p, t, c_fwd)
    c_rev = ConfusionCounts()
    for p, t in reversed(tiles):
        c_rev = accumulate(p, t, c_rev)
    half = len(tiles) // 2
    c_split = ConfusionCounts()
    for p, t in tiles[:half]:
        c_split = accumulate(p, t, c_split)
    c_right = ConfusionCounts()
    for p, t in tiles[half:]:
        c_right = accumulate(p, t, c_right)
    assert c_fwd == c_rev == c_split + c_right


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        accumulate(as_mask(np.zeros((2, 2))), as_mask(np.zeros((3, 2))))


def test_non_binary_rejected():
    bad = RasterGrid(np.array([[0, 7]], dtype=np.uint8))
    with pytest.raises(NonBinaryInput):
        accumulate(bad, as_mask(np.zeros((1, 2))))


def test_hand_values():
    c = ConfusionCounts(tp=6, fp=2, fn=2, tn=0)
    assert precision(c) == 0.75
    assert recall(c) == 0.75
    assert f1(c) == 0.75
    assert iou(c) == 0.6


def test_reported_adapter_row_consistency():
    # externally reported quadruple: P=0.879, R=0.815, F1=0.846, IoU=0.733
    p, r = 0.879, 0.815
    f = 2 * p * r / (p + r)
    assert abs(f - 0.846) < 5e-4
    iou_val = 0.733
    assert abs(f - 2 * iou_val / (1 + iou_val)) < 6e-4


def test_undefined_metrics():
    with pytest.raises(UndefinedMetric):
        precision(ConfusionCounts(tp=0, fp=0, fn=3, tn=1))
    with pytest.raises(UndefinedMetric):
        recall(ConfusionCounts(tp=0, fp=3, fn=0, tn=1))
    with pytest.raises(UndefinedMetric):
        f1(ConfusionCounts(tp=0, fp=3, fn=3, tn=0))
    with pytest.raises(UndefinedMetric):
        iou(ConfusionCounts(tp=0, fp=0, fn=0, tn=9))


def test_f1_iou_identity_property():
    rng = np.random.default_rng(4)
    for _ in range(500):
        c = ConfusionCounts(tp=int(rng.integers(1, 10000)),
                            fp=int(rng.integers(0, 10000)),
                            fn=int(rng.integers(0, 10000)),
                            tn=int(rng.integers(0, 10000)))
        i = iou(c)
        assert abs(f1(c) - 2 * i / (1 + i)) < 1e-12
        m = all_metrics(c)
        assert all(0.0 <= v <= 1.0 for v in m.values())


def test_csv_report(tmp_path):
    rows = [{"scene": "s1", "model": "adapter", "dataset": "test",
             "iou": 0.5, "f1": 2 / 3, "precision": 0.75, "recall": 0.6},
            {"scene": "s2", "model": "unet", "dataset": "test",
             "iou": None, "f1": None, "precision": None, "recall": None}]
    p = str(tmp_path / "m.csv")
    write_metrics_csv(rows, p)
    lines = open(p).read().strip().splitlines()
    assert lines[0] == "scene,model,dataset,iou,f1,precision,recall"
    assert lines[1].startswith("s1,adapter,test,0.500000,0.666667")
    assert lines[2] == "s2,unet,test,NA,NA,NA,NA"
