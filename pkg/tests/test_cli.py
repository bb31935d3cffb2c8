"""End-to-end pipeline tests through the CLI entry point."""

import os

import numpy as np
import pytest

from campseg.cli import main
from campseg.config import load_config
from campseg.errors import ConfigInvalid
from campseg.geotiff import read_geotiff
from campseg.tiler import TileSpec, enumerate_windows

from shp_reader import read_dbf, read_shp

CONFIG_TMPL = """
[run]
seed = 5
out_dir = {out}

[scene]
source = synthetic
width = 160
height = 160
dwelling_count = 22
dwelling_size_min = 5
dwelling_size_max = 10
occluder_fraction = 0.0
camouflage_fraction = 0.0
noise_sigma = 4.0

[region:tr]
role = train_large
window = 0 0 160 96

[region:va]
role = validation
window = 0 96 160 32

[region:te]
role = test
window = 0 128 160 32

[tile]
patch_size = 32
train_stride = 32
test_stride = 24

[model]
kind = adapter
patch_embed_size = 8
embed_dim = 16
depth = 2
heads = 2
window_size = 2
global_layers = 1
adapter_tune_dim = 8

[train]
epochs = {epochs}
batch_size = 2
lr_init = 1e-3
lr_min = 1e-5
{extra_train}

[stitch]
threshold = 0.5
"""


def write_config(tmp_path, name="cfg.ini", epochs=1, extra_train=""):
    out = str(tmp_path / "out")
    path = tmp_path / name
    path.write_text(CONFIG_TMPL.format(out=out, epochs=epochs,
                                       extra_train=extra_train))
    return str(path), out


def test_missing_config():
    assert main(["prepare", "--config", "/nonexistent.ini"]) == 1


def test_config_validation(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[run]\nseed = 1\n")
    with pytest.raises(ConfigInvalid):
        load_config(str(p))


def test_prepare_counts_match_enumeration(tmp_path):
    cfg_path, out = write_config(tmp_path)
    assert main(["prepare", "--config", cfg_path]) == 0
    manifest = open(os.path.join(out, "patches", "manifest.txt")).read()
    rows = [ln for ln in manifest.splitlines() if ln and not ln.startswith("#")]
    spec = TileSpec(32, 32)
    want_train = len(enumerate_windows(160, spec)) * len(enumerate_windows(96, spec))
    want_val = len(enumerate_windows(160, spec)) * len(enumerate_windows(32, spec))
    assert len(rows) == want_train + want_val
    assert os.path.exists(os.path.join(out, "scene", "te_image.tif"))
    assert os.path.exists(os.path.join(out, "scene", "te_mask.tif"))


def test_prepare_rerun_byte_identical(tmp_path):
    cfg_path, out = write_config(tmp_path)
    assert main(["prepare", "--config", cfg_path]) == 0
    blob_a = open(os.path.join(out, "patches", "train_large", "image_00000.tif"), "rb").read()
    scene_a = open(os.path.join(out, "scene", "scene_image.tif"), "rb").read()
    assert main(["prepare", "--config", cfg_path]) == 0
    blob_b = open(os.path.join(out, "patches", "train_large", "image_00000.tif"), "rb").read()
    scene_b = open(os.path.join(out, "scene", "scene_image.tif"), "rb").read()
    assert blob_a == blob_b and scene_a == scene_b


def test_prepare_augmented_counts(tmp_path):
    cfg_path, out = write_config(tmp_path, extra_train="augment = hflip vflip")
    assert main(["prepare", "--config", cfg_path]) == 0
    rows = [ln.split() for ln in
            open(os.path.join(out, "patches", "manifest.txt")).read().splitlines()
            if ln and not ln.startswith("#")]
    train_rows = [r for r in rows if r[1] == "train_large"]
    val_rows = [r for r in rows if r[1] == "validation"]
    assert len(train_rows) == 15 * 3        # original + hflip + vflip
    assert len(val_rows) == 5               # validation never augmented
    assert {r[6] for r in train_rows} == {"none", "hflip", "vflip"}


def test_full_pipeline_and_reports(tmp_path):
    cfg_path, out = write_config(tmp_path, epochs=2)
    for cmd in ("prepare", "train", "infer", "eval", "vectorize", "report"):
        assert main([cmd, "--config", cfg_path]) == 0, cmd

    # epochs.csv rows == epochs
    lines = open(os.path.join(out, "epochs.csv")).read().strip().splitlines()
    assert len(lines) == 3  # header + 2 epochs

    # mask is a binary single-band geotiff over the test window
    mask, gt = read_geotiff(os.path.join(out, "masks", "te_pred.tif"))
    assert (mask.width, mask.height, mask.bands) == (160, 32, 1)
    assert set(np.unique(mask.pixels)).issubset({0, 255})

    # metrics.csv exists with the stated column order
    metrics = open(os.path.join(out, "metrics.csv")).read().splitlines()
    assert metrics[0] == "scene,model,dataset,iou,f1,precision,recall"
    assert metrics[1].startswith("te,adapter,test,")

    # shapefile opens in the independent reader
    base = os.path.join(out, "vectors", "te_pred")
    shape_type, bbox, records = read_shp(base + ".shp")
    assert shape_type == 5
    _, rows = read_dbf(base + ".dbf")
    assert len(rows) == len(records)
    assert os.path.exists(base + ".prj")

    # report flags the argmax epoch
    report = open(os.path.join(out, "report.txt")).read()
    assert "<- max IoU" in report
    assert "peak validation IoU" in report


def test_eval_self_is_perfect(tmp_path):
    cfg_path, out = write_config(tmp_path)
    assert main(["prepare", "--config", cfg_path]) == 0
    truth = os.path.join(out, "scene", "te_mask.tif")
    assert main(["eval", "--config", cfg_path, "--pred", truth,
                 "--truth", truth]) == 0
    row = open(os.path.join(out, "metrics.csv")).read().splitlines()[1]
    parts = row.split(",")
    assert parts[3] == "1.000000" and parts[4] == "1.000000"


def test_infer_requires_checkpoint(tmp_path):
    cfg_path, out = write_config(tmp_path)
    assert main(["prepare", "--config", cfg_path]) == 0
    assert main(["infer", "--config", cfg_path]) == 1  # no best.ckpt yet


def test_freeze_contract_through_cli(tmp_path):
    from campseg.nn import load_checkpoint
    from campseg.trainer import init_model
    from campseg.nn.models import encoder_config_from_meta

    cfg_path, out = write_config(tmp_path, epochs=1)
    assert main(["prepare", "--config", cfg_path]) == 0
    assert main(["train", "--config", cfg_path]) == 0
    best = load_checkpoint(os.path.join(out, "best.ckpt"))
    enc_cfg = encoder_config_from_meta(best.meta)
    fresh, _ = init_model("adapter", 32, seed=5, freeze_encoder=True,
                          encoder_cfg=enc_cfg)
    assert best.bytes_of("enc.") == fresh.bytes_of("enc.")
    assert best.bytes_of("dec.") != fresh.bytes_of("dec.")


def test_determinism_two_full_runs(tmp_path):
    cfg_a, out_a = write_config(tmp_path, name="a.ini")
    os.makedirs(tmp_path / "b", exist_ok=True)
    cfg_b, out_b = write_config(tmp_path / "b", name="b.ini")
    for cfg in (cfg_a, cfg_b):
        for cmd in ("prepare", "train", "infer", "eval", "vectorize"):
            assert main([cmd, "--config", cfg]) == 0
    # byte-identical masks, metrics, shapefiles
    for rel in (("masks", "te_pred.tif"), ("metrics.csv",),
                ("vectors", "te_pred.shp"), ("vectors", "te_pred.dbf"),
                ("vectors", "te_pred.shx")):
        pa = os.path.join(out_a, *rel)
        pb = os.path.join(out_b, *rel)
        assert open(pa, "rb").read() == open(pb, "rb").read(), rel
    # epoch logs identical except the wall_time column
    rows_a = open(os.path.join(out_a, "epochs.csv")).read().splitlines()
    rows_b = open(os.path.join(out_b, "epochs.csv")).read().splitlines()
    for ra, rb in zip(rows_a, rows_b):
        assert ra.split(",")[:-1] == rb.split(",")[:-1]


def test_unet_pipeline_runs(tmp_path):
    cfg_path, out = write_config(tmp_path)
    text = open(cfg_path).read().replace("kind = adapter", "kind = unet")
    text = text.replace("batch_size = 2", "batch_size = 4")
    open(cfg_path, "w").write(text)
    for cmd in ("prepare", "train", "infer", "eval"):
        assert main([cmd, "--config", cfg_path]) == 0, cmd
    metrics = open(os.path.join(out, "metrics.csv")).read().splitlines()
    assert metrics[1].startswith("te,unet,test,")
