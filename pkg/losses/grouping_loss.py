"""class-constrained grouping loss 的各项：旧 token 的 KL 蒸馏、新 token 的 CE、两个模态的 BCE"""

import numpy as np

from model.tokens import ClassTokenBank
from numerics import ops
from numerics.tensor import Tensor
from utils.errors import LossError, ShapeError

PROB_FLOOR = np.finfo(np.float64).tiny
CE_FLOOR = 1e-12
BCE_CLAMP = 1e-7


def kl_divergence(p: Tensor, q: Tensor) -> Tensor:
    """Σ p (log p - log q)，按 0·log0 = 0 处理。p、q 是最后一维上的概率分布"""
    if p.shape != q.shape:
        raise ShapeError("KL operands differ in shape", p.shape, q.shape)
    log_p = ops.log(ops.clip(p, PROB_FLOOR))
    log_q = ops.log(ops.clip(q, PROB_FLOOR))
    return ops.sum(ops.mul(p, ops.sub(log_p, log_q)))


def kl_token_distill(bank: ClassTokenBank) -> tuple[Tensor, bool]:
    """Σ_i KL(softmax(c_i^t) || softmax(c_i^{t-1}))，只对旧 tokens。

    第一个任务没有快照，返回 (0, False)。
    """
    if not bank.has_snapshot or bank.old_count == 0:
        return Tensor(0.0), False
    frozen = np.asarray(bank.frozen_old)
    if frozen.shape != (bank.old_count, bank.dim):
        raise ShapeError("Token snapshot does not match old tokens", frozen.shape, (bank.old_count, bank.dim))

    current = ops.softmax(bank.old_tokens(), axis=-1)
    previous = ops.softmax(Tensor(frozen), axis=-1)
    return kl_divergence(current, previous), True


def _target_slots(targets: np.ndarray | Tensor, rows: int, cols: int) -> np.ndarray:
    h = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if h.shape != (rows, cols):
        raise ShapeError("Targets must match token probabilities", h.shape, (rows, cols))
    if not np.all((h == 0.0) | (h == 1.0)) or not np.all(h.sum(axis=-1) == 1.0):
        raise LossError("Every target row must be one-hot")
    return np.argmax(h, axis=-1)


def ce_new_tokens(e: Tensor, targets: np.ndarray | Tensor) -> Tensor:
    """Σ_i -log e_i[target_i]，e: K_new×K_task"""
    if e.ndim != 2:
        raise ShapeError("Token probabilities must be K_new×K_task", e.shape)
    slots = _target_slots(targets, *e.shape)
    picked = ops.gather(e, (np.arange(e.shape[0]), slots))
    return ops.scale(ops.sum(ops.log(ops.clip(picked, CE_FLOOR, 1.0))), -1.0)


def token_targets(count: int) -> np.ndarray:
    """新 token i 对应当前任务内的第 i 个类别"""
    return np.eye(count)


def bce_class(p: Tensor, y: np.ndarray | Tensor) -> Tensor:
    """Σ_i -[y_i log p_i + (1-y_i) log(1-p_i)]，p 先夹到 [1e-7, 1-1e-7]"""
    labels = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    if labels.shape != p.shape:
        raise ShapeError("BCE labels differ from probabilities", labels.shape, p.shape)
    clamped = ops.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    y_t = Tensor(labels)
    positive = ops.mul(y_t, ops.log(clamped))
    negative = ops.mul(Tensor(1.0 - labels), ops.log(ops.sub(Tensor(np.ones(p.shape)), clamped)))
    return ops.scale(ops.sum(ops.add(positive, negative)), -1.0)


def bce_logits(z: Tensor, y: np.ndarray | Tensor) -> Tensor:
    """与 bce_class(sigmoid(z), y) 同一个量，直接由 logits 算：Σ_i softplus(z_i) - y_i z_i。

    sigmoid 饱和后梯度仍是 sigmoid(z) - y，不会被 clamp 截断。
    """
    labels = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    if labels.shape != z.shape:
        raise ShapeError("BCE labels differ from logits", labels.shape, z.shape)
    return ops.sum(ops.sub(ops.softplus(z), ops.mul(Tensor(labels), z)))
