import numpy as np

from config.config import Split
from data.dataset import FeatureDataset


def _flatten(dataset: FeatureDataset, idx: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [dataset.audio[idx, 0, :], dataset.visual[idx].mean(axis=1)], axis=1
    )


def nearest_centroid_accuracy(
    dataset: FeatureDataset,
    fit_split: Split = Split.TRAIN,
    eval_split: Split = Split.TEST,
) -> float:
    """用 train split 的类中心做最近邻分类，衡量数据本身的可分性"""
    fit_idx = dataset.indices(fit_split)
    eval_idx = dataset.indices(eval_split)
    if len(fit_idx) == 0 or len(eval_idx) == 0:
        return float("nan")
    x_fit = _flatten(dataset, fit_idx)
    y_fit = dataset.labels[fit_idx]
    classes = np.unique(y_fit)
    centroids = np.stack([x_fit[y_fit == c].mean(axis=0) for c in classes])

    x_eval = _flatten(dataset, eval_idx)
    dists = ((x_eval[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    predicted = classes[np.argmin(dists, axis=1)]
    return float(np.mean(predicted == dataset.labels[eval_idx]))
