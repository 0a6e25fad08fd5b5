import logging
import random
from typing import Iterable, Sequence

import numpy as np

from utils.errors import ConfigError

logger = logging.getLogger(__name__)


class RehearsalBuffer:
    """按类别分开的 reservoir：每个类别最多保存 capacity 个样本下标。

    流中第 n 个到达的样本以 capacity/n 的概率留在 reservoir 中。
    """

    def __init__(self, capacity: int = 50, seed: int = 0):
        if capacity < 1:
            raise ConfigError("Buffer capacity must be positive", config_key="buffer_capacity")
        self.capacity = capacity
        self.seed = seed
        self._rng = random.Random(seed)
        self._stores: dict[int, list[int]] = {}
        self._seen: dict[int, int] = {}

    def add(self, class_id: int, index: int) -> None:
        store = self._stores.setdefault(class_id, [])
        seen = self._seen.get(class_id, 0) + 1
        self._seen[class_id] = seen
        if len(store) < self.capacity:
            store.append(index)
            return
        slot = self._rng.randrange(seen)
        if slot < self.capacity:
            store[slot] = index

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(sorted(self._stores))

    def count(self, class_id: int) -> int:
        return len(self._stores.get(class_id, []))

    def seen(self, class_id: int) -> int:
        return self._seen.get(class_id, 0)

    def class_indices(self, class_id: int) -> list[int]:
        return list(self._stores.get(class_id, []))

    def indices(self) -> np.ndarray:
        """全部保存的样本下标，按类别排序后拼接"""
        stored = [i for c in self.classes for i in self._stores[c]]
        return np.array(stored, dtype=np.int64)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        pool = self.indices()
        if n <= 0 or len(pool) == 0:
            return np.zeros(0, dtype=np.int64)
        return rng.choice(pool, size=min(n, len(pool)), replace=False)

    def __len__(self) -> int:
        return sum(len(s) for s in self._stores.values())

    def __bool__(self) -> bool:
        return len(self) > 0

    def to_dict(self) -> dict[str, int]:
        return {str(c): self.count(c) for c in self.classes}


def buffer_update(
    buffer: RehearsalBuffer,
    samples: Iterable[int],
    labels: Sequence[int] | np.ndarray,
    class_ids: Iterable[int],
) -> RehearsalBuffer:
    """把一段样本流按 reservoir 规则放进 buffer。不属于 class_ids 的样本忽略"""
    allowed = {int(c) for c in class_ids}
    skipped = 0
    for index, label in zip(samples, labels):
        label = int(label)
        if label not in allowed:
            skipped += 1
            continue
        buffer.add(label, int(index))
    if skipped:
        logger.warning(f"Ignored {skipped} samples outside the current classes")
    logger.debug(f"Buffer now holds {len(buffer)} samples over {len(buffer.classes)} classes")
    return buffer
