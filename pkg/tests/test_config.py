import json

import pytest

from config.config import AssignmentMode, DenominatorVariant, ExperimentConfig, TrainConfig
from config.loader import load_config
from utils.errors import ConfigError


def test_defaults_follow_the_reference_protocol():
    cfg = load_config()
    assert (cfg.tasks, cfg.depth, cfg.buffer_capacity, cfg.learning_rate, cfg.tau) == (4, 3, 50, 1e-4, 0.07)
    assert cfg.ctl_denominator == DenominatorVariant.AS_WRITTEN
    assert cfg.ablation == "full"


def test_toml_file_then_overrides(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('tasks = 2\nclasses-per-task = 3\nassignment_mode = "hard"\nseed = 4\n')
    cfg = load_config(path, {"seed": 9, "depth": None})
    assert (cfg.tasks, cfg.classes_per_task, cfg.seed, cfg.depth) == (2, 3, 9, 3)
    assert cfg.assignment_mode == AssignmentMode.HARD


def test_json_config(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"epochs": 7, "ctl_denominator": "with-positive"}))
    cfg = load_config(path)
    assert cfg.epochs == 7 and cfg.ctl_denominator == DenominatorVariant.WITH_POSITIVE


def test_user_config_is_the_lowest_layer(tmp_path, monkeypatch):
    user_dir = tmp_path / "user"
    user_dir.mkdir()
    (user_dir / "config.toml").write_text("epochs = 3\nbatch_size = 4\n")
    monkeypatch.setattr("config.loader.get_config_dir", lambda: user_dir)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"epochs": 5}))
    cfg = load_config(path)
    assert (cfg.epochs, cfg.batch_size) == (5, 4)
    assert load_config(use_system_config=False).epochs == 100


def test_env_seed_applies_only_when_unset(tmp_path, monkeypatch):
    monkeypatch.setenv("CIGN_SEED", "17")
    assert load_config().seed == 17
    assert load_config(overrides={"seed": 2}).seed == 2
    monkeypatch.setenv("CIGN_SEED", "abc")
    with pytest.raises(ConfigError):
        load_config()


@pytest.mark.parametrize(
    "overrides",
    [{"tasks": 0}, {"tau": -1.0}, {"batch_size": 1}, {"rho": 1.5}, {"no_such_key": 1}, {"assignment_mode": "fuzzy"}],
)
def test_invalid_values_are_config_errors(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides=overrides)


def test_malformed_files(tmp_path):
    bad_toml = tmp_path / "bad.toml"
    bad_toml.write_text("tasks = = 2")
    with pytest.raises(ConfigError):
        load_config(bad_toml)
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad_json)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_upper_bound_folds_into_one_task():
    cfg = TrainConfig(tasks=4, classes_per_task=2, upper_bound=True)
    assert (cfg.tasks, cfg.classes_per_task, cfg.num_classes) == (1, 8, 8)


def test_upper_bound_folds_raw_input_before_field_checks(tmp_path):
    # 折叠发生在字段校验之前：字符串输入先折叠，结果再按字段类型校验
    cfg = TrainConfig.model_validate({"tasks": "3", "classes_per_task": "2", "upper_bound": True})
    assert (cfg.tasks, cfg.classes_per_task) == (1, 6)

    path = tmp_path / "upper.json"
    path.write_text(json.dumps({"tasks": 2, "classes-per-task": 3, "upper_bound": True}))
    loaded = load_config(path)
    assert (loaded.tasks, loaded.classes_per_task, loaded.num_classes) == (1, 6, 6)


@pytest.mark.parametrize(
    ("flags", "name"),
    [
        ({}, "full"),
        ({"disable_ctl": True}, "avctd-only"),
        ({"disable_kl": True, "disable_ce_new": True}, "avcg-only"),
        ({"disable_kl": True, "disable_ce_new": True, "disable_ctl": True}, "baseline"),
    ],
)
def test_ablation_names(flags, name):
    assert ExperimentConfig(**flags).ablation == name


def test_experiment_config_splits_into_parts():
    cfg = ExperimentConfig(tasks=2, classes_per_task=3, dim=16, separation=4.0)
    assert cfg.train_config().num_classes == 6
    spec = cfg.synthetic_spec()
    assert (spec.num_classes, spec.dim, spec.separation) == (6, 16, 4.0)
    assert cfg.to_dict()["out_dir"] == "runs/default"
