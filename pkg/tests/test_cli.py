import json
import math
import subprocess
import sys

import pytest

from rein.cli import main

SMALL = """
[system]
kind = springs
n_objects = 3

[sim]
frames_train = 12
frames_test = 16
n_train = 16
n_valid = 4
n_test = 4

[model]
neuron_dim = 8
heads = 2
context_len = 10

[train]
epochs = 1
batch_size = 8

[eval]
horizons = 1, 3, 6
"""

SUBCOMMANDS = ["generate", "train", "eval", "rollout", "plot", "gradcheck"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "springs.cfg").write_text(SMALL)
    assert main(["generate", "--config", str(root / "springs.cfg"), "--out", str(root / "data")]) == 0
    return root / "data"


def test_generate_then_train(data_dir, tmp_path, capsys):
    assert (data_dir / "config.ini").exists()
    for split in ("train", "valid", "test"):
        assert (data_dir / f"{split}.bin").exists() and (data_dir / f"{split}.json").exists()
    run = tmp_path / "run1"
    assert main(["train", "--data", str(data_dir), "--out", str(run)]) == 0
    assert (run / "checkpoint.json").exists() and (run / "checkpoint.bin").exists()
    man = json.loads((run / "manifest.json").read_text())
    assert set(man) >= {"config", "code_version", "dataset_checksums", "epoch_losses", "final_metrics",
                        "wall_clock_s"}
    assert len(man["epoch_losses"]) == 1
    sidecar = json.loads((data_dir / "train.json").read_text())
    assert man["dataset_checksums"]["train"] == sidecar["sha256"]


@pytest.mark.parametrize("model", ["lstm", "gtgraph"])
def test_train_baselines(data_dir, tmp_path, model):
    assert main(["train", "--data", str(data_dir), "--out", str(tmp_path / model), "--model", model]) == 0
    assert json.loads((tmp_path / model / "manifest.json").read_text())["model"]["kind"] == model


def test_eval_untrained_checkpoint(data_dir, tmp_path, capsys):
    run = tmp_path / "untrained"
    assert main(["train", "--data", str(data_dir), "--out", str(run), "--epochs", "0"]) == 0
    capsys.readouterr()
    assert main(["eval", "--run", str(run), "--data", str(data_dir), "--csv", str(tmp_path / "m.csv")]) == 0
    out = capsys.readouterr().out
    values = [float(line.split()[2]) for line in out.splitlines()[1:]]
    assert len(values) == 4 and all(math.isfinite(v) for v in values)


def test_rollout_and_plot(data_dir, tmp_path):
    run = tmp_path / "r"
    assert main(["train", "--data", str(data_dir), "--out", str(run), "--epochs", "0"]) == 0
    assert main(["rollout", "--run", str(run), "--data", str(data_dir), "--out", str(tmp_path / "roll"),
                 "--episodes", "2"]) == 0
    assert len(list((tmp_path / "roll").glob("*.csv"))) == 2
    assert main(["plot", "--run", str(run), "--data", str(data_dir), "--out", str(tmp_path / "plots"),
                 "--episodes", "2"]) == 0
    assert len(list((tmp_path / "plots").glob("*.svg"))) == 4


def test_resume_continues_epochs(data_dir, tmp_path):
    run = tmp_path / "res"
    assert main(["train", "--data", str(data_dir), "--out", str(run)]) == 0
    assert main(["train", "--data", str(data_dir), "--out", str(run), "--resume", "--epochs", "1"]) == 0
    meta = json.loads((run / "checkpoint.json").read_text())["meta"]
    assert meta["trainer"]["epoch"] == 2


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_exits_zero(cmd):
    with pytest.raises(SystemExit) as err:
        main([cmd, "--help"])
    assert err.value.code == 0


def test_usage_errors_exit_two():
    for argv in (["frobnicate"], ["train", "--bogus"], []):
        with pytest.raises(SystemExit) as err:
            main(argv)
        assert err.value.code == 2


def test_invalid_config_exits_one(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("[model]\nheads = 3\n")
    assert main(["generate", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "d")]) == 1
    assert "model.heads" in capsys.readouterr().err


def test_missing_data_exits_one(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "r")]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "rein.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gradcheck" in proc.stdout
