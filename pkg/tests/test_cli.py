import json

import pytest

from hierrank.cli import main
from hierrank.data import load_corpus

FAST = "emb_dim: 8\nhidden: 8\nchannels: 4\nkernel_sizes: [1, 2]\nhead_hidden: 8\nsynth_questions: 18\nmax_epochs: 2\n"


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(FAST)
    return path


def test_synth_writes_splits(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out) == {"train": 50, "dev": 20, "test": 20}
    assert len(load_corpus(tmp_path / "train.jsonl")) == 50


def test_train_then_eval(tmp_path, config, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--scheme", "MTL", "--seed", "0", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["scheme"] == "MTL(list)"
    assert main(["eval", "--config", str(config), "--seed", "0", "--out", str(out), "--split", "test"]) == 0
    evaluated = json.loads(capsys.readouterr().out)
    assert evaluated["map"] == pytest.approx(summary["mean_test_map"], abs=1e-12)
    assert (out / "trace_seed0.json").exists() and (out / "eval_test_seed0.json").exists()


def test_curves(tmp_path, config, capsys):
    out = tmp_path / "curves"
    assert main(["curves", "--config", str(config), "--seed", "0", "--out", str(out)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert set(result["mean_epochs_to_dev_map"]) == {"PRI(list)", "CA(list)"}
    assert (out / "curve_PRI_list_-seed0.csv").exists() and (out / "curve_CA_list_-seed0.csv").exists()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("no_such_key: 1\n")
    assert main(["train", "--config", str(bad)]) == 2
    assert "no_such_key" in capsys.readouterr().err


def test_unknown_scheme_rejected():
    with pytest.raises(SystemExit):
        main(["train", "--scheme", "XYZ"])
