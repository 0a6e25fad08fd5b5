from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from numerics import ops
from numerics.tensor import Tensor
from utils.errors import ConfigError, ShapeError

TOKEN_PARAM = "tokens"


@dataclass
class ClassTokenBank:
    """可学习的 class tokens。行 i 对应 class_ids[i]；前 old_count 行属于之前的任务"""

    tokens: Tensor
    class_ids: tuple[int, ...] = ()
    old_count: int = 0
    # 训练当前任务之前，旧 tokens 的只读拷贝（第一个任务没有）
    frozen_old: np.ndarray | None = None
    _index: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.tokens.ndim != 2 or self.tokens.shape[0] != len(self.class_ids):
            raise ShapeError("tokens must be K×D with one row per class id", self.tokens.shape)
        if not 0 <= self.old_count <= len(self.class_ids):
            raise ConfigError("old_count out of range", details={"old_count": self.old_count})
        self._index = {c: i for i, c in enumerate(self.class_ids)}

    @classmethod
    def empty(cls, dim: int) -> "ClassTokenBank":
        return cls(tokens=Tensor(np.zeros((0, dim)), requires_grad=True, name=TOKEN_PARAM))

    @property
    def size(self) -> int:
        return len(self.class_ids)

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    @property
    def new_count(self) -> int:
        return self.size - self.old_count

    @property
    def has_snapshot(self) -> bool:
        return self.frozen_old is not None

    def index_of(self, class_id: int) -> int:
        return self._index[int(class_id)]

    def indices_of(self, class_ids: Sequence[int] | np.ndarray) -> np.ndarray:
        return np.array([self._index[int(c)] for c in class_ids], dtype=np.int64)

    def old_tokens(self) -> Tensor:
        return ops.slice_axis(self.tokens, 0, self.old_count, axis=0)

    def new_tokens(self) -> Tensor:
        return ops.slice_axis(self.tokens, self.old_count, self.size, axis=0)


def expand_tokens(
    bank: ClassTokenBank,
    new_class_ids: Sequence[int],
    rng: np.random.Generator,
    std: float = 0.02,
) -> ClassTokenBank:
    """新任务开始：旧 tokens 原样保留（仍然可训练，由 KL 约束），新 tokens 随机初始化"""
    new_ids = tuple(int(c) for c in new_class_ids)
    duplicated = set(new_ids) & set(bank.class_ids)
    if duplicated or len(set(new_ids)) != len(new_ids):
        raise ConfigError(
            "Duplicate class id in token expansion",
            details={"class_ids": sorted(duplicated) or list(new_ids)},
        )
    fresh = rng.normal(0.0, std, size=(len(new_ids), bank.dim))
    data = np.concatenate([bank.tokens.data, fresh], axis=0)
    frozen = None
    if bank.size > 0:
        frozen = bank.tokens.data.copy()
        frozen.flags.writeable = False
    return ClassTokenBank(
        tokens=Tensor(data, requires_grad=True, name=TOKEN_PARAM),
        class_ids=bank.class_ids + new_ids,
        old_count=bank.size,
        frozen_old=frozen,
    )
