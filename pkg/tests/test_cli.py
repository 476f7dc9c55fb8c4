import json

import numpy as np
import pytest
import yaml

from lfsr import container
from lfsr.cli import main
from lfsr.synthetic import smooth_lightfield


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    container.save_container(smooth_lightfield(12, 12, 8, seed=1), tmp_path / "fields" / "train0")
    container.save_container(smooth_lightfield(12, 12, 8, seed=2), tmp_path / "fields" / "test0")
    cfg = {
        "train_fields": ["fields/train0"],
        "test_fields": ["fields/test0"],
        "seed": 3,
        "angular_net": {"conv_filters": [8, 4], "conv_kernels": [3, 1]},
        "spatial_net": {"conv_filters": [8, 4], "conv_kernels": [3, 1]},
        "train": {"iterations": 20, "batch_size": 8, "log_interval": 5},
        "spatial_keys": "middle",
    }
    (tmp_path / "exp.yaml").write_text(yaml.safe_dump(cfg))
    return tmp_path


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def _prepare_and_train(ws, capsys):
    assert main(["--config", "exp.yaml", "prepare"]) == 0
    assert main(["--config", "exp.yaml", "train", "angular"]) == 0
    assert main(["--config", "exp.yaml", "train", "spatial", "--keys"] + [f"{u},{v},0" for u in range(8)
                                                                          for v in range(8)]) == 0
    capsys.readouterr()


def test_ingest(workspace, capsys):
    assert main(["ingest", "fields/train0"]) == 0
    out = _json(capsys)
    assert (out["H"], out["W"], out["A"], out["channels"]) == (12, 12, 8, 1)


def test_ingest_missing_is_error(workspace, capsys):
    assert main(["ingest", "fields/none"]) == 2
    assert capsys.readouterr().err.startswith("error[container]")


def test_print_effective_config(workspace, capsys):
    assert main(["--config", "exp.yaml", "--seed", "9", "prepare", "--print-effective-config"]) == 0
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["seed"] == 9 and cfg["train"]["iterations"] == 20


def test_global_flags_after_subcommand(workspace, capsys):
    assert main(["train", "angular", "--config", "exp.yaml", "--iterations", "7",
                 "--print-effective-config"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["train"]["iterations"] == 7


def test_prepare_outputs(workspace, capsys):
    assert main(["--config", "exp.yaml", "prepare"]) == 0
    manifest = _json(capsys)
    assert [e["split"] for e in manifest["fields"]] == ["train", "test"]
    low = container.load_container(workspace / "data" / "test0" / "lowres")
    assert low.shape == (1, 6, 6, 4, 4)
    assert container.load_container(workspace / "data" / "test0" / "lowres_spatial").shape == (1, 6, 6, 8, 8)


def test_prepare_rejects_odd_angular(workspace, capsys):
    container.save_container(smooth_lightfield(4, 4, 5), workspace / "fields" / "odd")
    (workspace / "odd.yaml").write_text("train_fields: [fields/odd]\n")
    assert main(["--config", "odd.yaml", "prepare"]) == 2
    assert "odd" in capsys.readouterr().err
    assert not (workspace / "data").exists()


def test_train_before_prepare(workspace, capsys):
    assert main(["--config", "exp.yaml", "train", "angular"]) == 2
    assert "prepare" in capsys.readouterr().err


def test_bad_key_syntax(workspace, capsys):
    main(["--config", "exp.yaml", "prepare"])
    capsys.readouterr()
    assert main(["--config", "exp.yaml", "train", "spatial", "--keys", "1,2"]) == 2
    assert capsys.readouterr().err.startswith("error[")


def test_full_workflow(workspace, capsys):
    _prepare_and_train(workspace, capsys)
    models = workspace / "models"
    assert (models / "angular_loss.csv").is_file() and (models / "spatial_loss.csv").is_file()
    rows = (models / "angular_loss.csv").read_text().splitlines()
    assert rows[0] == "channel,step,loss" and len(rows) == 1 + 4

    assert main(["enhance", "data/test0/lowres", "--out", "enh"]) == 0
    assert _json(capsys)["output"] == {"H": 12, "W": 12, "A": 8, "channels": 1}
    assert main(["baseline", "data/test0/lowres", "--out", "bic"]) == 0
    capsys.readouterr()

    assert main(["evaluate", "fields/test0", "enh", "--out", "rep"]) == 0
    assert "PSNR" in capsys.readouterr().out
    report = json.loads((workspace / "rep" / "report.json").read_text())
    assert len(report["per_perspective"]) == 64

    assert main(["evaluate", "fields/test0", "bic", "--out", "rep_mid", "--perspectives", "middle"]) == 0
    report = json.loads((workspace / "rep_mid" / "report.json").read_text())
    assert len(report["per_perspective"]) == 9


def test_enhance_missing_spatial_models(workspace, capsys):
    assert main(["--config", "exp.yaml", "prepare"]) == 0
    assert main(["--config", "exp.yaml", "train", "angular"]) == 0
    assert main(["--config", "exp.yaml", "train", "spatial"]) == 0
    capsys.readouterr()
    assert main(["enhance", "data/test0/lowres", "--out", "enh"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error[missing-model]") and "63 key(s)" in err
    assert main(["enhance", "data/test0/lowres", "--mode", "angular", "--out", "enh_a"]) == 0


def test_resume_matches_fresh_run(workspace, capsys):
    main(["--config", "exp.yaml", "prepare"])
    assert main(["--config", "exp.yaml", "train", "angular", "--iterations", "10"]) == 0
    assert main(["--config", "exp.yaml", "train", "angular", "--iterations", "20", "--resume"]) == 0
    assert main(["--config", "exp.yaml", "train", "angular", "--out", "fresh"]) == 0
    a, b = workspace / "models", workspace / "fresh"
    assert (a / "angular" / "angular_0.model").read_bytes() == (b / "angular" / "angular_0.model").read_bytes()
    assert (a / "angular_loss.csv").read_text() == (b / "angular_loss.csv").read_text()


def test_resume_without_checkpoint(workspace, capsys):
    main(["--config", "exp.yaml", "prepare"])
    assert main(["--config", "exp.yaml", "train", "spatial", "--resume"]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_seed_changes_weights(workspace, capsys):
    main(["--config", "exp.yaml", "prepare"])
    main(["--config", "exp.yaml", "train", "angular", "--out", "m1"])
    main(["--config", "exp.yaml", "--seed", "4", "train", "angular", "--out", "m2"])
    one = (workspace / "m1" / "angular" / "angular_0.model").read_bytes()
    two = (workspace / "m2" / "angular" / "angular_0.model").read_bytes()
    assert one != two


def test_sweep(workspace, capsys):
    main(["--config", "exp.yaml", "prepare"])
    capsys.readouterr()
    assert main(["--config", "exp.yaml", "sweep", "filter-size", "--iterations", "10", "--out", "sw"]) == 0
    out = _json(capsys)
    assert out["variants"] == ["k2=1", "k2=3", "k2=5"] and out["key"] == [4, 4, 0]
    rows = (workspace / "sw" / "sweep_filter-size.csv").read_text().splitlines()
    assert rows[0] == "variant,step,train_loss,test_psnr" and len(rows) == 1 + 3 * 2
    assert all(np.isfinite(float(r.split(",")[3])) for r in rows[1:])


def test_evaluate_shape_mismatch(workspace, capsys):
    assert main(["evaluate", "fields/train0", "fields/train0", "--out", "r"]) == 0
    container.save_container(smooth_lightfield(12, 11, 8), workspace / "fields" / "narrow")
    capsys.readouterr()
    assert main(["evaluate", "fields/train0", "fields/narrow", "--out", "r2"]) == 2
    assert capsys.readouterr().err.startswith("error[shape]")


def test_unwritable_output_is_io_error(workspace, capsys):
    (workspace / "blocker").write_text("x")
    assert main(["baseline", "fields/train0", "--mode", "spatial", "--out", "blocker/sub"]) == 3
    assert capsys.readouterr().err.startswith("error[io]")
