from dataclasses import dataclass, field

import numpy as np

from config.config import Split
from utils.errors import DataError


@dataclass(frozen=True)
class FeatureSample:
    """一对 audio-visual 特征：audio 1×D，visual P×D"""

    sample_id: int
    audio: np.ndarray
    visual: np.ndarray
    label: int
    split: Split


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """不可变的特征数据集。所有数组在构造后都被设置为只读，可以在线程间共享"""

    name: str
    audio: np.ndarray  # N×1×D
    visual: np.ndarray  # N×P×D
    labels: np.ndarray  # N
    splits: np.ndarray  # N，元素为 Split 的 value
    sample_ids: np.ndarray  # N
    _class_ids: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        audio = np.ascontiguousarray(self.audio, dtype=np.float64)
        visual = np.ascontiguousarray(self.visual, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        splits = np.asarray(self.splits, dtype="<U5")
        sample_ids = np.asarray(self.sample_ids, dtype=np.int64)

        n = labels.shape[0]
        if audio.ndim != 3 or audio.shape[1] != 1:
            raise DataError("audio features must be N×1×D", details={"shape": audio.shape})
        if visual.ndim != 3 or visual.shape[2] != audio.shape[2]:
            raise DataError("visual features must be N×P×D", details={"shape": visual.shape})
        if not (audio.shape[0] == visual.shape[0] == splits.shape[0] == sample_ids.shape[0] == n):
            raise DataError("per-sample arrays disagree on the sample count")
        if len(np.unique(sample_ids)) != n:
            raise DataError("sample ids must be unique")
        if not (np.all(np.isfinite(audio)) and np.all(np.isfinite(visual))):
            raise DataError("features must be finite")
        valid = {s.value for s in Split}
        if not set(np.unique(splits).tolist()) <= valid:
            raise DataError("unknown split name", details={"splits": sorted(set(splits.tolist()))})

        for arr in (audio, visual, labels, splits, sample_ids):
            arr.flags.writeable = False
        object.__setattr__(self, "audio", audio)
        object.__setattr__(self, "visual", visual)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "splits", splits)
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "_class_ids", tuple(int(c) for c in np.unique(labels)))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.audio.shape[2])

    @property
    def patches(self) -> int:
        return int(self.visual.shape[1])

    @property
    def class_ids(self) -> tuple[int, ...]:
        return self._class_ids

    @property
    def num_classes(self) -> int:
        return len(self._class_ids)

    def indices(self, split: Split, class_ids: list[int] | tuple[int, ...] | None = None) -> np.ndarray:
        mask = self.splits == split.value
        if class_ids is not None:
            mask &= np.isin(self.labels, np.asarray(list(class_ids), dtype=np.int64))
        return np.flatnonzero(mask)

    def sample(self, index: int) -> FeatureSample:
        return FeatureSample(
            sample_id=int(self.sample_ids[index]),
            audio=self.audio[index],
            visual=self.visual[index],
            label=int(self.labels[index]),
            split=Split(str(self.splits[index])),
        )

    def class_counts(self, split: Split) -> dict[int, int]:
        labels = self.labels[self.splits == split.value]
        values, counts = np.unique(labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}
