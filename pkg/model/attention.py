import math

import numpy as np

from config.config import AttentionVariant, Modality
from model.tokens import ClassTokenBank
from numerics import ops
from numerics.tensor import Tensor
from utils.errors import ConfigError, ShapeError


class AttentionAggregator:
    """把 [features; class tokens] 拼起来做 depth 层 self-attention，每层带残差。

    literal 变体严格按 y_j = Softmax(x_j X^T / sqrt(D)) X 计算，没有参数；
    projected 变体每层有 W_q / W_k / W_v。
    """

    def __init__(
        self,
        modality: Modality,
        dim: int,
        depth: int = 3,
        variant: AttentionVariant = AttentionVariant.LITERAL,
        rng: np.random.Generator | None = None,
        init_std: float = 0.02,
    ):
        if depth < 1:
            raise ConfigError("Attention depth must be at least 1", config_key="depth")
        self.modality = modality
        self.dim = dim
        self.depth = depth
        self.variant = variant
        self.layers: list[dict[str, Tensor]] = []
        if variant == AttentionVariant.PROJECTED:
            rng = rng or np.random.default_rng(0)
            for layer in range(depth):
                self.layers.append(
                    {
                        key: Tensor(
                            rng.normal(0.0, init_std, size=(dim, dim)),
                            requires_grad=True,
                            name=f"{modality.value}.agg.{layer}.{key}",
                        )
                        for key in ("w_q", "w_k", "w_v")
                    }
                )

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for layer in self.layers:
            for t in layer.values():
                params[t.name or ""] = t
        return params

    def attend(self, x: Tensor) -> Tensor:
        """x: (B×)N×D，输出形状相同"""
        inv_sqrt_d = 1.0 / math.sqrt(self.dim)
        for layer in range(self.depth):
            if self.variant == AttentionVariant.PROJECTED:
                params = self.layers[layer]
                q = ops.matmul(x, params["w_q"])
                k = ops.matmul(x, params["w_k"])
                v = ops.matmul(x, params["w_v"])
            else:
                q = k = v = x
            scores = ops.scale(ops.matmul(q, ops.transpose(k)), inv_sqrt_d)
            weights = ops.softmax(scores, axis=-1)
            x = ops.add(x, ops.matmul(weights, v))
        return x


def aggregate(
    features: Tensor, bank: ClassTokenBank | Tensor, agg: AttentionAggregator
) -> tuple[Tensor, Tensor]:
    """features: (B×)L×D。返回 (feat_out: (B×)L×D, token_out: (B×)K×D)"""
    tokens = bank.tokens if isinstance(bank, ClassTokenBank) else bank
    if features.ndim not in (2, 3):
        raise ShapeError("features must be L×D or B×L×D", features.shape)
    if features.shape[-1] != tokens.shape[-1] or features.shape[-1] != agg.dim:
        raise ShapeError("Feature and token dimensions disagree", features.shape, tokens.shape)

    length = features.shape[-2]
    count = tokens.shape[0]
    if features.ndim == 3:
        tokens = ops.broadcast_to(tokens, (features.shape[0], count, agg.dim))
    x = ops.concat([features, tokens], axis=-2)
    x = agg.attend(x)
    feat_out = ops.slice_axis(x, 0, length, axis=-2)
    token_out = ops.slice_axis(x, length, length + count, axis=-2)
    return feat_out, token_out
