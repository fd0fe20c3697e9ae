import numpy as np
import pytest

from advflow.cli import main
from advflow.data import save_dataset, synthesize_digits


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    train = synthesize_digits(96, seed=0, height=16, width=16, split="train")
    test = synthesize_digits(32, seed=1, height=16, width=16, split="test")
    save_dataset(train, root / "train.bin")
    save_dataset(test, root / "test.bin")
    return root


def run(*args):
    return main([str(a) for a in args])


def train_tiny(data_dir, out, mode="natural", seed="0", epochs="1"):
    return run(
        "train", "--mode", mode, "--train-data", data_dir / "train.bin",
        "--test-data", data_dir / "test.bin", "--epochs", epochs,
        "--seed", seed, "--out", out,
    )


def test_train_writes_outputs(data_dir, tmp_path):
    out = tmp_path / "run"
    assert train_tiny(data_dir, out) == 0
    assert (out / "model.ckpt").exists()
    assert (out / "train_log.csv").exists()
    assert (out / "train_curves.png").exists()
    header = (out / "train_log.csv").read_text().splitlines()[0]
    assert header == "epoch,lr,train_loss,clean_acc,adv_acc"


def test_train_rerun_byte_identical(data_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert train_tiny(data_dir, a, mode="joint-sp") == 0
    assert train_tiny(data_dir, b, mode="joint-sp") == 0
    assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()
    assert (a / "train_log.csv").read_bytes() == (b / "train_log.csv").read_bytes()


def test_seed_changes_model(data_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert train_tiny(data_dir, a, seed="0") == 0
    assert train_tiny(data_dir, b, seed="1") == 0
    assert (a / "model.ckpt").read_bytes() != (b / "model.ckpt").read_bytes()


def test_eval_outputs_and_rerun_identical(data_dir, tmp_path):
    model_dir = tmp_path / "m"
    assert train_tiny(data_dir, model_dir) == 0
    e1, e2 = tmp_path / "e1", tmp_path / "e2"
    for out in (e1, e2):
        code = run(
            "eval", "--checkpoint", model_dir / "model.ckpt",
            "--test-data", data_dir / "test.bin", "--limit", "8",
            "--steps", "2", "--out", out, "--workers", "2",
        )
        assert code == 0
        assert (out / "eval.csv").exists()
        assert (out / "eval_accuracy.png").exists()
    assert (e1 / "eval.csv").read_bytes() == (e2 / "eval.csv").read_bytes()
    header = (e1 / "eval.csv").read_text().splitlines()[0]
    assert header == "attack,eps_pixel,eps_spatial,steps,accuracy,examples,seconds"


def test_eval_limit_row_count(data_dir, tmp_path):
    model_dir = tmp_path / "m"
    assert train_tiny(data_dir, model_dir) == 0
    out = tmp_path / "e"
    assert run("eval", "--checkpoint", model_dir / "model.ckpt",
               "--test-data", data_dir / "test.bin", "--limit", "5",
               "--steps", "1", "--out", out) == 0
    lines = (out / "eval.csv").read_text().strip().splitlines()
    assert len(lines) == 6  # header + 5 suite rows
    for line in lines[1:]:
        assert line.split(",")[5] == "5"


def test_attack_command(data_dir, tmp_path):
    model_dir = tmp_path / "m"
    assert train_tiny(data_dir, model_dir) == 0
    out = tmp_path / "adv"
    code = run(
        "attack", "--checkpoint", model_dir / "model.ckpt",
        "--test-data", data_dir / "test.bin", "--limit", "6",
        "--steps", "2", "--mode", "joint-sp", "--out", out,
    )
    assert code == 0
    assert (out / "attack_tensors.bin").exists()
    assert (out / "attack_examples.png").exists()
    flags = (out / "attack_flags.csv").read_text().strip().splitlines()
    assert flags[0] == "index,label,prediction,success"
    assert len(flags) == 7


def test_sweep_command(data_dir, tmp_path):
    model_dir = tmp_path / "m"
    assert train_tiny(data_dir, model_dir) == 0
    out = tmp_path / "sw"
    code = run(
        "sweep", "--checkpoint", model_dir / "model.ckpt",
        "--test-data", data_dir / "test.bin", "--limit", "8",
        "--steps", "1", "--axis", "pixel", "--values", "0,4,8", "--out", out,
    )
    assert code == 0
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 4
    assert (out / "sweep_curve.png").exists()


def test_gradcheck_command(capsys):
    assert run("gradcheck", "--instances", "2") == 0
    printed = capsys.readouterr().out
    assert printed.count("PASS") == 4
    assert "FAIL" not in printed


def test_gradcheck_fault_injection(capsys):
    assert run("gradcheck", "--instances", "2", "--inject-fault", "input_gradient") == 1
    printed = capsys.readouterr().out
    assert "FAIL" in printed


def test_config_file_and_flag_precedence(data_dir, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "seed: 5\ntrain:\n  epochs: 1\n  lr: 0.01\ndata:\n  augment_crop: false\n"
    )
    out = tmp_path / "run"
    code = run(
        "train", "--config", cfg, "--train-data", data_dir / "train.bin",
        "--test-data", data_dir / "test.bin", "--out", out, "--seed", "7",
    )
    assert code == 0
    # flag seed (7) beats file seed (5): rerunning with explicit seed 7 and
    # the same file-config values must reproduce the checkpoint
    out2 = tmp_path / "run2"
    cfg2 = tmp_path / "cfg2.yaml"
    cfg2.write_text(
        "seed: 7\ntrain:\n  epochs: 1\n  lr: 0.01\ndata:\n  augment_crop: false\n"
    )
    assert run("train", "--config", cfg2, "--train-data", data_dir / "train.bin",
               "--test-data", data_dir / "test.bin", "--out", out2) == 0
    assert (out / "model.ckpt").read_bytes() == (out2 / "model.ckpt").read_bytes()


def test_unknown_config_key_rejected(data_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("train:\n  eposh: 3\n")
    code = run("train", "--config", cfg, "--train-data", data_dir / "train.bin")
    assert code == 2
    err = capsys.readouterr().err
    assert "eposh" in err


def test_unknown_section_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("modle:\n  dtype: float32\n")
    assert run("gradcheck", "--config", cfg) == 2
    assert "modle" in capsys.readouterr().err


def test_bad_type_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("train:\n  epochs: fast\n")
    assert run("gradcheck", "--config", cfg) == 2


def test_missing_data_is_config_error(tmp_path, capsys):
    assert run("train", "--out", tmp_path / "x") == 2
    assert "train" in capsys.readouterr().err


def test_missing_checkpoint_errors(data_dir, tmp_path, capsys):
    code = run("eval", "--checkpoint", tmp_path / "nope.ckpt",
               "--test-data", data_dir / "test.bin", "--out", tmp_path / "e")
    assert code == 2


def test_eps_conversion_logged(data_dir, tmp_path, caplog):
    import logging

    model_dir = tmp_path / "m"
    assert train_tiny(data_dir, model_dir) == 0
    with caplog.at_level(logging.INFO, logger="advflow.cli"):
        run("eval", "--checkpoint", model_dir / "model.ckpt",
            "--test-data", data_dir / "test.bin", "--limit", "4",
            "--steps", "1", "--eps-pixel", "8", "--out", tmp_path / "e")
    text = " ".join(r.getMessage() for r in caplog.records)
    assert "0-255" in text and "0.0627451" in text
