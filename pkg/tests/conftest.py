import numpy as np
import pytest

from config.config import SyntheticSpec, TrainConfig
from data.synthetic import generate_synthetic


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec() -> SyntheticSpec:
    return SyntheticSpec(
        num_classes=4, dim=8, patches=4,
        train_per_class=8, val_per_class=2, test_per_class=4,
        separation=6.0, sigma=1.0, seed=3,
    )


@pytest.fixture
def tiny_dataset(tiny_spec):
    return generate_synthetic(tiny_spec)


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(
        tasks=2, classes_per_task=2, dim=8, patches=4, depth=1,
        epochs=2, batch_size=8, buffer_capacity=3, seed=5, learning_rate=1e-2,
    )


@pytest.fixture(autouse=True)
def _no_user_config(monkeypatch, tmp_path):
    # 测试不读取真实的用户级配置和 CIGN_SEED
    monkeypatch.setattr("config.loader.get_config_dir", lambda: tmp_path / "no-user-config")
    monkeypatch.delenv("CIGN_SEED", raising=False)
