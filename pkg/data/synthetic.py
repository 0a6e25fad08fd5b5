import logging

import numpy as np

from config.config import Split, SyntheticSpec
from data.dataset import FeatureDataset

logger = logging.getLogger(__name__)


def _random_rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    # 让分解唯一，结果只由 rng 决定
    return q * np.sign(np.diag(r))


def class_means(spec: SyntheticSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """每个类别的 audio / visual 均值。visual 均值是 audio 均值旋转后与新随机方向的 rho 加权组合"""
    d = spec.dim
    rotation = _random_rotation(rng, d)
    base = rng.normal(size=(spec.num_classes, d)) / np.sqrt(d)
    fresh = rng.normal(size=(spec.num_classes, d)) / np.sqrt(d)
    audio_means = spec.separation * base
    visual_means = spec.separation * (spec.rho * base @ rotation.T + (1.0 - spec.rho) * fresh)
    return audio_means, visual_means


def generate_synthetic(spec: SyntheticSpec) -> FeatureDataset:
    """按类别、按 split 依次生成样本。同样的 spec（包括 seed）总是生成同样的数据集"""
    rng = np.random.default_rng(spec.seed)
    audio_means, visual_means = class_means(spec, rng)

    per_split = [
        (Split.TRAIN, spec.train_per_class),
        (Split.VAL, spec.val_per_class),
        (Split.TEST, spec.test_per_class),
    ]
    audio_parts: list[np.ndarray] = []
    visual_parts: list[np.ndarray] = []
    labels: list[int] = []
    splits: list[str] = []
    for split, count in per_split:
        for c in range(spec.num_classes):
            if count == 0:
                continue
            audio_noise = rng.normal(0.0, spec.sigma, size=(count, 1, spec.dim))
            visual_noise = rng.normal(0.0, spec.sigma, size=(count, spec.patches, spec.dim))
            audio_parts.append(audio_means[c] + audio_noise)
            visual_parts.append(visual_means[c] + visual_noise)
            labels.extend([c] * count)
            splits.extend([split.value] * count)

    n = len(labels)
    dataset = FeatureDataset(
        name=spec.name,
        audio=np.concatenate(audio_parts, axis=0) if audio_parts else np.zeros((0, 1, spec.dim)),
        visual=np.concatenate(visual_parts, axis=0)
        if visual_parts
        else np.zeros((0, spec.patches, spec.dim)),
        labels=np.asarray(labels, dtype=np.int64),
        splits=np.asarray(splits, dtype="<U5"),
        sample_ids=np.arange(n, dtype=np.int64),
    )
    logger.info(
        f"Generated {n} samples: {spec.num_classes} classes, D={spec.dim}, P={spec.patches}"
    )
    return dataset
