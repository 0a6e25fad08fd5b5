from dataclasses import dataclass, field

import numpy as np

from numerics.tensor import Tensor
from utils.errors import NonFiniteError, ShapeError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray | None],
    state: AdamState,
    lr: float,
) -> dict[str, np.ndarray]:
    """带 bias correction 的 Adam 一步。返回新的参数字典，state 原地更新。没有梯度的参数按 0 处理"""
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"Non-finite gradient for parameter {name}", where=name)

    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    updated: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p) if g is None else g
        if g.shape != p.shape:
            raise ShapeError(f"Gradient shape differs for parameter {name}", g.shape, p.shape)
        m = state.m.get(name)
        if m is None or m.shape != p.shape:
            m = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        state.m[name], state.v[name] = m, v
        updated[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return updated


class Adam:
    """作用在 Tensor 参数上：读取 .grad，写回 .data"""

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps)

    def step(self, params: dict[str, Tensor]) -> None:
        new_values = adam_step(
            {name: t.data for name, t in params.items()},
            {name: t.grad for name, t in params.items()},
            self.state,
            self.lr,
        )
        for name, t in params.items():
            t.data = new_values[name]

    def zero_grad(self, params: dict[str, Tensor]) -> None:
        for t in params.values():
            t.zero_grad()

    def reset(self) -> None:
        self.state = AdamState(beta1=self.state.beta1, beta2=self.state.beta2, eps=self.state.eps)
