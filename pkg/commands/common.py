import json
import logging
from pathlib import Path
from typing import Any

from config.config import ExperimentConfig
from data.dataset import FeatureDataset
from data.features_io import load_features
from data.synthetic import generate_synthetic
from utils.paths import atomic_write_text

logger = logging.getLogger(__name__)


def load_dataset(cfg: ExperimentConfig) -> FeatureDataset:
    """有 dataset_path 就读文件，否则按配置现场生成合成数据"""
    if cfg.dataset_path is not None:
        logger.info(f"Loading features from {cfg.dataset_path}")
        return load_features(cfg.dataset_path)
    return generate_synthetic(cfg.synthetic_spec())


def write_json(path: Path, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
