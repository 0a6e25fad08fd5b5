from dataclasses import dataclass

import numpy as np

from config.config import AssignmentMode, Modality
from numerics import ops
from numerics.tensor import Tensor
from utils.errors import ConfigError, ShapeError

# 分母的下限：没有任何 feature 分配给某个 token 时不会除以 0。
# 用下限而不是加法偏移，L=1 时分子分母中的 A 才能严格约掉
DENOM_EPS = 1e-8
GROUPING_WEIGHTS = ("w_q", "w_k", "w_v", "w_o")


class GroupingBlock:
    def __init__(
        self,
        modality: Modality,
        dim: int,
        mode: AssignmentMode = AssignmentMode.SOFT,
        rng: np.random.Generator | None = None,
        init_std: float = 0.02,
        gumbel_noise: bool = False,
    ):
        rng = rng or np.random.default_rng(0)
        self.modality = modality
        self.dim = dim
        self.mode = mode
        self.gumbel_noise = gumbel_noise
        self.weights: dict[str, Tensor] = {
            key: Tensor(
                rng.normal(0.0, init_std, size=(dim, dim)),
                requires_grad=True,
                name=f"{modality.value}.group.{key}",
            )
            for key in GROUPING_WEIGHTS
        }

    def parameters(self) -> dict[str, Tensor]:
        return {t.name or key: t for key, t in self.weights.items()}

    @property
    def w_q(self) -> Tensor:
        return self.weights["w_q"]

    @property
    def w_k(self) -> Tensor:
        return self.weights["w_k"]

    @property
    def w_v(self) -> Tensor:
        return self.weights["w_v"]

    @property
    def w_o(self) -> Tensor:
        return self.weights["w_o"]


@dataclass
class GroupingOutput:
    """一个模态的 grouping 结果"""

    embeddings: Tensor  # (B×)K×D，class-aware 特征 g_i
    assignment: Tensor  # (B×)L×K，每个 feature 在 K 个 token 上的分配


def gumbel(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    u = rng.uniform(np.finfo(np.float64).tiny, 1.0, size=shape)
    return -np.log(-np.log(u))


def _pool_weights(assignment: Tensor) -> Tensor:
    mass = ops.clip(ops.sum(assignment, axis=-2, keepdims=True), DENOM_EPS)
    return ops.div(assignment, ops.broadcast_to(mass, assignment.shape))


def group(
    feat: Tensor,
    tokens: Tensor,
    block: GroupingBlock,
    rng: np.random.Generator | None = None,
) -> GroupingOutput:
    """A[l,i] = Softmax_i(W_q f_l · W_k c_i)；
    g_i = c_i + W_o (Σ_l A[l,i] W_v f_l) / max(Σ_l A[l,i], eps)。

    hard 模式下前向用 one-hot 的 A，反向用 soft A 的梯度。
    rng 只在训练时传入，用于 Gumbel 噪声。
    """
    if tokens.shape[-2] == 0:
        raise ConfigError("Grouping needs at least one class token")
    if feat.ndim != tokens.ndim or feat.shape[-1] != block.dim or tokens.shape[-1] != block.dim:
        raise ShapeError("Grouping inputs disagree", feat.shape, tokens.shape)
    if feat.ndim == 3 and feat.shape[0] != tokens.shape[0]:
        raise ShapeError("Grouping batch extents disagree", feat.shape, tokens.shape)

    queries = ops.matmul(feat, block.w_q)
    keys = ops.matmul(tokens, block.w_k)
    logits = ops.matmul(queries, ops.transpose(keys))
    if rng is not None and block.gumbel_noise and block.mode == AssignmentMode.HARD:
        logits = ops.add(logits, Tensor(gumbel(rng, logits.shape)))

    soft = ops.softmax(logits, axis=-1)
    assignment = soft
    weights = _pool_weights(soft)
    if block.mode == AssignmentMode.HARD:
        assignment = ops.straight_through_onehot(soft, axis=-1)
        hard = assignment.data
        hard_weights = hard / np.maximum(hard.sum(axis=-2, keepdims=True), DENOM_EPS)
        # 前向取 one-hot 的池化权重，反向沿 soft 权重走
        weights = ops.add(weights, Tensor(hard_weights - weights.data))

    values = ops.matmul(feat, block.w_v)
    pooled = ops.matmul(ops.transpose(weights), values)
    embeddings = ops.add(tokens, ops.matmul(pooled, block.w_o))
    return GroupingOutput(embeddings=embeddings, assignment=assignment)
