"""由 primitive 组合出来的函数，不单独登记到 registry"""

import numpy as np

from numerics import ops
from numerics.tensor import Tensor
from utils.errors import DegenerateVectorError, ShapeError

NORM_EPS = 1e-12


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """行向量约定：x @ W + b"""
    out = ops.matmul(x, weight)
    if bias is not None:
        out = ops.add(out, bias)
    return out


def _check_norms(x: Tensor, what: str) -> None:
    norms = np.linalg.norm(x.data, axis=-1)
    if np.any(norms <= NORM_EPS):
        raise DegenerateVectorError(
            f"{what} has a near-zero norm", details={"min_norm": float(np.min(norms))}
        )


def cosine_sim(a: Tensor, b: Tensor) -> Tensor:
    """两个 D 维向量的余弦相似度，返回标量 tensor"""
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError("cosine_sim expects two vectors of equal length", a.shape, b.shape)
    _check_norms(a, "first vector")
    _check_norms(b, "second vector")
    dot = ops.sum(ops.mul(a, b))
    norm_a = ops.sqrt(ops.sum(ops.mul(a, a)))
    norm_b = ops.sqrt(ops.sum(ops.mul(b, b)))
    return ops.div(dot, ops.mul(norm_a, norm_b))


def l2_normalize_rows(x: Tensor) -> Tensor:
    _check_norms(x, "row")
    norms = ops.sqrt(ops.sum(ops.mul(x, x), axis=-1, keepdims=True))
    return ops.div(x, ops.broadcast_to(norms, x.shape))


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """a: N×D, b: M×D -> N×M 的余弦相似度矩阵"""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("cosine_matrix expects N×D and M×D", a.shape, b.shape)
    return ops.matmul(l2_normalize_rows(a), ops.transpose(l2_normalize_rows(b)))
