"""可微 primitive。每个 op 前向时检查形状，并登记到 op registry。

广播只允许发生在 leading extent 上：两个操作数形状相同，或者其中一个的形状是另一个形状的后缀。
其它维度的扩展必须显式调用 broadcast_to。
"""

import builtins
from typing import Sequence

import numpy as np

from numerics.registry import differentiable
from numerics.tensor import Tensor
from utils.errors import AxisError, DomainError, ShapeError

Index = tuple[np.ndarray, ...]


def _is_suffix(short: tuple[int, ...], long: tuple[int, ...]) -> bool:
    return len(short) < len(long) and long[len(long) - len(short) :] == short


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or _is_suffix(a.shape, b.shape) or _is_suffix(b.shape, a.shape):
        return
    raise ShapeError(f"'{op}' only broadcasts over leading extents", a.shape, b.shape)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise AxisError(f"Axis {axis} is out of range for a {ndim}-d tensor")
    return axis % ndim


@differentiable("add", "elementwise a + b")
def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)

    def backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op("add", a.data + b.data, (a, b), backward)


@differentiable("sub", "elementwise a - b")
def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)

    def backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op("sub", a.data - b.data, (a, b), backward)


@differentiable("mul", "elementwise a * b")
def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)

    def backward(g: np.ndarray):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op("mul", a.data * b.data, (a, b), backward)


@differentiable("div", "elementwise a / b")
def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("div", a, b)
    if np.any(b.data == 0.0):
        raise DomainError("Division by zero", details={"shape": b.shape})

    def backward(g: np.ndarray):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor.from_op("div", a.data / b.data, (a, b), backward)


@differentiable("scale", "multiply by a constant")
def scale(x: Tensor, s: float) -> Tensor:
    def backward(g: np.ndarray):
        return (g * s,)

    return Tensor.from_op("scale", x.data * s, (x,), backward)


@differentiable("matmul", "matrix product with optional leading batch extent")
def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim not in (2, 3) or b.ndim not in (2, 3):
        raise ShapeError("matmul expects 2-d or 3-d operands", a.shape, b.shape)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul inner extents disagree", a.shape, b.shape)
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ShapeError("matmul batch extents disagree", a.shape, b.shape)

    def backward(g: np.ndarray):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if a.ndim == 2 and ga.ndim == 3:
            ga = ga.sum(axis=0)
        if b.ndim == 2 and gb.ndim == 3:
            gb = gb.sum(axis=0)
        return ga, gb

    return Tensor.from_op("matmul", a.data @ b.data, (a, b), backward)


@differentiable("transpose", "swap the last two axes")
def transpose(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ShapeError("transpose needs at least 2 axes", x.shape)

    def backward(g: np.ndarray):
        return (np.swapaxes(g, -1, -2),)

    return Tensor.from_op("transpose", np.swapaxes(x.data, -1, -2), (x,), backward)


@differentiable("reshape", "view with a new shape")
def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError("Cannot reshape", x.shape, tuple(shape), cause=e) from e

    def backward(g: np.ndarray):
        return (g.reshape(x.shape),)

    return Tensor.from_op("reshape", data, (x,), backward)


@differentiable("sum", "sum over one axis or all")
def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    ax = None if axis is None else _normalize_axis(axis, x.ndim)

    def backward(g: np.ndarray):
        if ax is None:
            return (np.full(x.shape, float(np.asarray(g).reshape(-1)[0])),)
        expanded = g if keepdims else np.expand_dims(g, ax)
        return (np.broadcast_to(expanded, x.shape).copy(),)

    return Tensor.from_op("sum", np.sum(x.data, axis=ax, keepdims=keepdims), (x,), backward)


@differentiable("mean", "mean over one axis or all")
def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    ax = None if axis is None else _normalize_axis(axis, x.ndim)
    count = x.size if ax is None else x.shape[ax]

    def backward(g: np.ndarray):
        if ax is None:
            return (np.full(x.shape, float(np.asarray(g).reshape(-1)[0]) / count),)
        expanded = g if keepdims else np.expand_dims(g, ax)
        return (np.broadcast_to(expanded / count, x.shape).copy(),)

    return Tensor.from_op("mean", np.mean(x.data, axis=ax, keepdims=keepdims), (x,), backward)


@differentiable("exp", "elementwise exponential")
def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def backward(g: np.ndarray):
        return (g * y,)

    return Tensor.from_op("exp", y, (x,), backward)


@differentiable("log", "elementwise natural logarithm")
def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise DomainError(
            "log of a non-positive value", details={"min": float(np.min(x.data))}
        )

    def backward(g: np.ndarray):
        return (g / x.data,)

    return Tensor.from_op("log", np.log(x.data), (x,), backward)


@differentiable("sqrt", "elementwise square root")
def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0.0):
        raise DomainError(
            "sqrt of a negative value", details={"min": float(np.min(x.data))}
        )
    y = np.sqrt(x.data)

    def backward(g: np.ndarray):
        return (g * 0.5 / y,)

    return Tensor.from_op("sqrt", y, (x,), backward)


@differentiable("sigmoid", "logistic function")
def sigmoid(x: Tensor) -> Tensor:
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward(g: np.ndarray):
        return (g * y * (1.0 - y),)

    return Tensor.from_op("sigmoid", y, (x,), backward)


@differentiable("softplus", "log(1 + exp(x)) without overflow")
def softplus(x: Tensor) -> Tensor:
    y = np.logaddexp(0.0, x.data)
    z = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward(g: np.ndarray):
        return (g * s,)

    return Tensor.from_op("softplus", y, (x,), backward)


@differentiable("softmax", "max-shifted softmax along an axis")
def softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _normalize_axis(axis, x.ndim)
    shifted = x.data - np.max(x.data, axis=ax, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=ax, keepdims=True)

    def backward(g: np.ndarray):
        return (y * (g - np.sum(g * y, axis=ax, keepdims=True)),)

    return Tensor.from_op("softmax", y, (x,), backward)


@differentiable("log_softmax", "max-shifted log-softmax along an axis")
def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    ax = _normalize_axis(axis, x.ndim)
    shifted = x.data - np.max(x.data, axis=ax, keepdims=True)
    y = shifted - np.log(np.sum(np.exp(shifted), axis=ax, keepdims=True))

    def backward(g: np.ndarray):
        return (g - np.exp(y) * np.sum(g, axis=ax, keepdims=True),)

    return Tensor.from_op("log_softmax", y, (x,), backward)


@differentiable("clip", "clamp into [lo, hi]; zero gradient outside")
def clip(x: Tensor, lo: float, hi: float = np.inf) -> Tensor:
    mask = (x.data >= lo) & (x.data <= hi)

    def backward(g: np.ndarray):
        return (g * mask,)

    return Tensor.from_op("clip", np.clip(x.data, lo, hi), (x,), backward)


@differentiable("max", "maximum along an axis; gradient routed to the first argmax")
def max(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    ax = _normalize_axis(axis, x.ndim)
    idx = np.argmax(x.data, axis=ax)
    idx_keep = np.expand_dims(idx, ax)
    data = np.take_along_axis(x.data, idx_keep, axis=ax)
    if not keepdims:
        data = np.squeeze(data, axis=ax)

    def backward(g: np.ndarray):
        expanded = g if keepdims else np.expand_dims(g, ax)
        grad = np.zeros(x.shape)
        np.put_along_axis(grad, idx_keep, expanded, axis=ax)
        return (grad,)

    return Tensor.from_op("max", data, (x,), backward)


@differentiable("concat", "join tensors along an axis")
def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    ax = _normalize_axis(axis, ndim)
    for t in tensors[1:]:
        other = [s for i, s in enumerate(t.shape) if i != ax]
        first = [s for i, s in enumerate(tensors[0].shape) if i != ax]
        if t.ndim != ndim or other != first:
            raise ShapeError("concat extents disagree off the join axis", tensors[0].shape, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=ax))

    data = np.concatenate([t.data for t in tensors], axis=ax)
    return Tensor.from_op("concat", data, tensors, backward)


@differentiable("slice", "contiguous range [start, stop) along an axis")
def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    ax = _normalize_axis(axis, x.ndim)
    if not 0 <= start <= stop <= x.shape[ax]:
        raise ShapeError(f"Slice [{start}, {stop}) out of range on axis {ax}", x.shape)
    index = [builtins.slice(None)] * x.ndim
    index[ax] = builtins.slice(start, stop)
    key = tuple(index)

    def backward(g: np.ndarray):
        grad = np.zeros(x.shape)
        grad[key] = g
        return (grad,)

    return Tensor.from_op("slice", x.data[key], (x,), backward)


@differentiable("gather", "advanced-index selection; repeated indices accumulate")
def gather(x: Tensor, index: Index) -> Tensor:
    index = tuple(np.asarray(i, dtype=np.int64) for i in index)
    if len(index) > x.ndim:
        raise ShapeError("Too many index arrays for gather", x.shape)
    try:
        data = x.data[index]
    except IndexError as e:
        raise ShapeError("gather index out of range", x.shape, cause=e) from e

    def backward(g: np.ndarray):
        grad = np.zeros(x.shape)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor.from_op("gather", data, (x,), backward)


@differentiable("broadcast_to", "explicit expansion; gradient summed back")
def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    target = tuple(shape)
    try:
        ok = np.broadcast_shapes(x.shape, target) == target
    except ValueError:
        ok = False
    if not ok:
        raise ShapeError("Cannot broadcast", x.shape, target)
    lead = len(target) - x.ndim

    def backward(g: np.ndarray):
        grad = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(
            i for i, s in enumerate(x.shape) if s == 1 and target[lead + i] != 1
        )
        if axes:
            grad = grad.sum(axis=axes, keepdims=True)
        return (grad,)

    return Tensor.from_op(
        "broadcast_to", np.broadcast_to(x.data, target).copy(), (x,), backward
    )


@differentiable(
    "straight_through_onehot",
    "argmax one-hot forward, identity gradient backward",
    check="pass_through",
)
def straight_through_onehot(x: Tensor, axis: int = -1) -> Tensor:
    ax = _normalize_axis(axis, x.ndim)
    idx = np.expand_dims(np.argmax(x.data, axis=ax), ax)
    hard = np.zeros(x.shape)
    np.put_along_axis(hard, idx, 1.0, axis=ax)

    def backward(g: np.ndarray):
        return (g,)

    return Tensor.from_op("straight_through_onehot", hard, (x,), backward)
