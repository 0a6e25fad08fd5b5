import contextvars
import itertools
from contextlib import contextmanager
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Callable, Iterator

import numpy as np

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

# grad mode 是 context variable：不同线程、不同 context 互不影响
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "grad_enabled", default=True
)
# 所有 op 共用一个单调递增的序号，用于还原执行顺序
_sequence = itertools.count()

BackwardFn = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def no_grad() -> Iterator[None]:
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


@dataclass(eq=False)
class Node:
    """一次被记录的可微操作。backward 接收输出的梯度，返回每个输入的梯度（不需要的位置为 None）"""

    op: str
    inputs: tuple["Tensor", ...]
    backward: BackwardFn
    seq: int


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(
        self,
        data: "ArrayLike",
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: Node | None = None

    @classmethod
    def from_op(
        cls,
        op: str,
        data: np.ndarray,
        inputs: tuple["Tensor", ...],
        backward: BackwardFn,
    ) -> "Tensor":
        """op 的输出。只有在 grad mode 打开并且有输入需要梯度时才挂上 Node"""
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out.name = None
        out._node = None
        out.requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        if out.requires_grad:
            out._node = Node(op=op, inputs=inputs, backward=backward, seq=next(_sequence))
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def node(self) -> Node | None:
        return self._node

    def item(self) -> float:
        if self.size != 1:
            from utils.errors import ShapeError

            raise ShapeError("item() requires a single-element tensor", self.shape)
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        from numerics.tape import backward

        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{label}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # 运算符全部委托给 numerics.ops，保证每个运算都会被记录
    def __add__(self, other: Any) -> "Tensor":
        from numerics import ops

        return ops.add(self, _as_tensor(other))

    def __radd__(self, other: Any) -> "Tensor":
        from numerics import ops

        return ops.add(_as_tensor(other), self)

    def __sub__(self, other: Any) -> "Tensor":
        from numerics import ops

        return ops.sub(self, _as_tensor(other))

    def __rsub__(self, other: Any) -> "Tensor":
        from numerics import ops

        return ops.sub(_as_tensor(other), self)

    def __mul__(self, other: Any) -> "Tensor":
        from numerics import ops

        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.mul(self, _as_tensor(other))

    def __rmul__(self, other: Any) -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self, other: Any) -> "Tensor":
        from numerics import ops

        if np.isscalar(other):
            return ops.scale(self, 1.0 / float(other))
        return ops.div(self, _as_tensor(other))

    def __neg__(self) -> "Tensor":
        from numerics import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from numerics import ops

        return ops.matmul(self, other)

    @property
    def T(self) -> "Tensor":
        from numerics import ops

        return ops.transpose(self)


def _as_tensor(value: Any) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)
