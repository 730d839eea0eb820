import json

import pytest

from drq.cli import main


def test_oracle_suite(capsys):
    assert main(["oracle", "--suite", "lemma2"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and report["tolerance"] == 1e-12


def test_train_and_eval(tmp_path, capsys):
    cfg = tmp_path / "small.yaml"
    cfg.write_text("zs_dim: 8\nza_dim: 4\nzsa_dim: 8\nenc_hidden_dim: 8\nactor_hidden_dim: 8\n"
                   "critic_hidden_dim: 8\nbatch_size: 8\nexploration_steps: 100\neval_every: 200\n"
                   "eval_episodes: 2\nlog_every: 100\nbuffer_size: 1000\n")
    out = tmp_path / "run"
    assert main(["train", "--env", "SparseGoal2D", "--steps", "200", "--seed", "3", "--config", str(cfg),
                 "--out", str(out), "--ablation", "mrq_baseline"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] == 200 and summary["config"]["ablation"] == "mrq_baseline"
    assert summary["config"]["seed"] == 3 and summary["config"]["decay_eps"] == 0.0
    assert main(["eval", "--checkpoint", str(out / "checkpoint.npz"), "--episodes", "2", "--seed", "1"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert len(res["returns"]) == 2


def test_bad_config_is_reported(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("not_a_key: 1\n")
    assert main(["train", "--env", "PointMass2D", "--steps", "10", "--config", str(cfg),
                 "--out", str(tmp_path / "o")]) == 2
    assert "not_a_key" in capsys.readouterr().err


def test_missing_checkpoint(tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "none.npz")]) == 2


def test_unknown_suite():
    with pytest.raises(SystemExit):
        main(["oracle", "--suite", "everything"])
