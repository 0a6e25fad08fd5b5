import logging
from dataclasses import dataclass

import numpy as np

from config.config import DenominatorVariant
from numerics import ops
from numerics.functional import cosine_matrix, l2_normalize_rows
from numerics.tensor import Tensor
from utils.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class ContrastiveBatch:
    """一个模态的 continual contrastive 输入。

    g_prev[n] 与 g_curr_old[n] 按下标对齐（同一个旧类样本，分别来自冻结模型和当前模型）；
    g_curr_new 的每一行是当前 batch 中一个新类样本的特征，类别由 new_class_ids 给出。
    """

    g_prev: Tensor  # N×D
    g_curr_old: Tensor  # N×D
    g_curr_new: Tensor  # M×D
    tau: float = 0.07
    new_class_ids: np.ndarray | None = None
    denominator: DenominatorVariant = DenominatorVariant.AS_WRITTEN

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ConfigError("Temperature must be positive", config_key="tau")
        if self.g_prev.ndim != 2 or self.g_prev.shape != self.g_curr_old.shape:
            raise ShapeError("Previous and current old-class features must align", self.g_prev.shape, self.g_curr_old.shape)
        if self.g_prev.shape[0] < 1:
            raise ShapeError("Contrastive batch needs at least one old-class row", self.g_prev.shape)
        if self.g_curr_new.ndim != 2 or self.g_curr_new.shape[0] < 1 or self.g_curr_new.shape[1] != self.g_prev.shape[1]:
            raise ShapeError("Contrastive batch needs at least one negative row", self.g_curr_new.shape)
        if self.new_class_ids is None:
            self.new_class_ids = np.arange(self.g_curr_new.shape[0])
        self.new_class_ids = np.asarray(self.new_class_ids, dtype=np.int64)
        if self.new_class_ids.shape != (self.g_curr_new.shape[0],):
            raise ShapeError("One class id per negative row", self.new_class_ids.shape, self.g_curr_new.shape)

    @property
    def size(self) -> int:
        return self.g_prev.shape[0]


def _logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    # 平移量当作常数：logsumexp 对平移的梯度为 0
    shift = np.max(x.data, axis=axis, keepdims=True)
    shifted = ops.sub(x, Tensor(np.broadcast_to(shift, x.shape)))
    lse = ops.log(ops.sum(ops.exp(shifted), axis=axis, keepdims=True))
    return ops.add(lse, Tensor(shift))


def pooled_negative_similarity(sims: Tensor, class_ids: np.ndarray) -> Tensor:
    """N×M 相似度按负样本类别做 max-pooling，得到 N×C_neg"""
    rows = np.arange(sims.shape[0])
    columns = []
    for c in np.unique(class_ids):
        cols = np.flatnonzero(class_ids == c)
        block = ops.gather(sims, np.ix_(rows, cols))
        columns.append(ops.max(block, axis=-1, keepdims=True) if len(cols) > 1 else block)
    return columns[0] if len(columns) == 1 else ops.concat(columns, axis=-1)


def continual_contrastive(batch: ContrastiveBatch) -> Tensor:
    """-(1/N) Σ_n log[exp(sim(prev_n, old_n)/τ) / Σ_m exp(sim(prev_n, new_m)/τ)]。

    默认分母只有新类项；with-positive 变体把正样本也加进分母。
    """
    inv_tau = 1.0 / batch.tau
    positive = ops.sum(
        ops.mul(l2_normalize_rows(batch.g_prev), l2_normalize_rows(batch.g_curr_old)),
        axis=-1,
        keepdims=True,
    )
    negatives = pooled_negative_similarity(
        cosine_matrix(batch.g_prev, batch.g_curr_new), batch.new_class_ids
    )
    logits = ops.scale(negatives, inv_tau)
    if batch.denominator == DenominatorVariant.WITH_POSITIVE:
        logits = ops.concat([ops.scale(positive, inv_tau), logits], axis=-1)

    per_row = ops.sub(_logsumexp(logits, axis=-1), ops.scale(positive, inv_tau))
    return ops.mean(per_row)
