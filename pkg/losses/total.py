from dataclasses import dataclass, field, fields
from typing import Any

from numerics import ops
from numerics.tensor import Tensor

TERM_NAMES = ("kl_old_tokens", "ce_new_tokens", "bce_audio", "bce_visual", "ctl_audio", "ctl_visual")


def _zero() -> Tensor:
    return Tensor(0.0)


@dataclass
class LossParts:
    """同一张计算图上的各项损失。未启用的项保持常数 0"""

    kl_old_tokens: Tensor = field(default_factory=_zero)
    ce_new_tokens: Tensor = field(default_factory=_zero)
    bce_audio: Tensor = field(default_factory=_zero)
    bce_visual: Tensor = field(default_factory=_zero)
    ctl_audio: Tensor = field(default_factory=_zero)
    ctl_visual: Tensor = field(default_factory=_zero)


@dataclass
class LossBreakdown:
    kl_old_tokens: float
    ce_new_tokens: float
    bce_audio: float
    bce_visual: float
    ctl_audio: float
    ctl_visual: float
    total: float
    # 用于 backward 的标量
    tensor: Tensor = field(repr=False, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "tensor"}


def total_loss(parts: LossParts) -> LossBreakdown:
    """L = L_ctl + L_group，各项直接相加"""
    terms = [getattr(parts, name) for name in TERM_NAMES]
    total = terms[0]
    for term in terms[1:]:
        total = ops.add(total, term)
    return LossBreakdown(
        **{name: t.item() for name, t in zip(TERM_NAMES, terms)},
        total=total.item(),
        tensor=total,
    )
