import json

import pytest

from ades.errors import ConfigError
from ades.evaluation import read_metrics_csv
from ades.experiment import ExperimentConfig, resume, run_experiment, run_single
from ades.models import load_checkpoint

SMALL = {"n_per_class": 60, "n_per_class_test": 40, "hidden_sizes": [16], "epochs": 3, "batch_size": 32,
         "eps_min": 0.02, "lambda": 0.12, "train_steps": 3, "train_alpha": 0.02, "eval_steps": 5,
         "eval_alpha": 0.02, "eval_budgets": [0.04, 0.08], "lr_milestones": [2]}


def write_cfg(path, **extra):
    path.write_text(json.dumps({**SMALL, **extra}))
    return path


def test_unknown_key_lists_allowed_keys():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"epoch": 3})
    msg = str(info.value)
    assert "'epoch'" in msg and "epochs" in msg and "lambda" in msg


@pytest.mark.parametrize("raw", [
    {"mode": "adversarial"},
    {"modes": ["ades", "bogus"]},
    {"dropout": 1.0},
    {"epochs": -1},
    {"eps_min": -0.1},
    {"mode": "ades", "scheduler_mode": "static"},
])
def test_invalid_configs_rejected(raw):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_lambda_key_and_round_trip():
    cfg = ExperimentConfig.from_dict({"lambda": 0.25, "seed": 9})
    assert cfg.lam == 0.25
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_load_reports_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        ExperimentConfig.load(p)


def test_mode_matrix_writes_one_metrics_file_per_mode(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", modes=["clean", "pgd_at", "static_des", "ades"])
    run_experiment(cfg, tmp_path / "out")
    for mode in ("clean", "pgd_at", "static_des", "ades"):
        recs = read_metrics_csv(tmp_path / "out" / mode / "metrics.csv")
        assert [r.epoch for r in recs] == [1, 2, 3]
        assert all(r.mode == mode for r in recs)
        assert (tmp_path / "out" / mode / "checkpoint_final.bin").exists()


def test_rerun_gives_identical_artifacts(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", mode="ades")
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for name in ("metrics.csv", "checkpoint_final.bin", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_run(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", mode="pgd_at")
    run_experiment(cfg, tmp_path / "a", seed=0)
    run_experiment(cfg, tmp_path / "b", seed=1)
    assert (tmp_path / "a" / "checkpoint_final.bin").read_bytes() != (tmp_path / "b" / "checkpoint_final.bin").read_bytes()


def test_resume_from_periodic_checkpoint_matches_full_run(tmp_path):
    cfg = ExperimentConfig.from_dict({**SMALL, "epochs": 4, "checkpoint_every": 2, "mode": "ades"})
    run_single(cfg, tmp_path / "full")
    resume(cfg, tmp_path / "full" / "checkpoint_epoch0002.bin", tmp_path / "resumed")
    assert (tmp_path / "full" / "checkpoint_final.bin").read_bytes() == \
        (tmp_path / "resumed" / "checkpoint_final.bin").read_bytes()
    _, epoch = load_checkpoint(tmp_path / "resumed" / "checkpoint_final.bin")
    assert epoch == 4


def test_csv_dataset_config(tmp_path):
    (tmp_path / "tr.csv").write_text("0.1,0.2,0\n0.9,0.8,1\n0.2,0.1,0\n0.8,0.9,1\n")
    cfg = ExperimentConfig.from_dict({**SMALL, "dataset": "csv", "train_csv": str(tmp_path / "tr.csv"),
                                      "test_csv": str(tmp_path / "tr.csv"), "epochs": 1})
    _, recs = run_single(cfg, tmp_path / "out")
    assert len(recs) == 1
