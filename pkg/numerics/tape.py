import logging
from contextlib import contextmanager
from typing import Iterator

import numpy as np

from numerics.tensor import Node, Tensor
from utils.errors import NumericsError, ShapeError

logger = logging.getLogger(__name__)

# 被故意写坏 backward 规则的 op 名字，只用于 gradcheck 的 fault injection
_corrupted_ops: set[str] = set()
FAULT_SCALE = 1.5


@contextmanager
def inject_fault(op_name: str) -> Iterator[None]:
    """在 context 内把 op_name 的反向梯度乘以 FAULT_SCALE"""
    _corrupted_ops.add(op_name)
    logger.warning(f"Fault injected into backward rule of '{op_name}'")
    try:
        yield
    finally:
        _corrupted_ops.discard(op_name)


class Tape:
    """从某个输出出发、所有可达的被记录操作，按执行顺序排列"""

    def __init__(self, entries: list[tuple[Tensor, Node]]):
        self._entries = entries

    @classmethod
    def record(cls, output: Tensor) -> "Tape":
        seen: set[int] = set()
        entries: list[tuple[Tensor, Node]] = []
        stack = [output]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            if t.node is None:
                continue
            entries.append((t, t.node))
            stack.extend(t.node.inputs)
        entries.sort(key=lambda entry: entry[1].seq)
        return cls(entries)

    @property
    def ops(self) -> list[str]:
        return [node.op for _, node in self._entries]

    def __len__(self) -> int:
        return len(self._entries)

    def replay(self, output: Tensor, seed: np.ndarray) -> dict[int, tuple[Tensor, np.ndarray]]:
        """逆序回放，返回 id(tensor) -> (tensor, dLoss/dTensor)。
        一个 tensor 被多个 op 使用时，梯度相加"""
        grads: dict[int, tuple[Tensor, np.ndarray]] = {id(output): (output, seed)}
        for out, node in reversed(self._entries):
            entry = grads.get(id(out))
            if entry is None:
                continue
            input_grads = node.backward(entry[1])
            if node.op in _corrupted_ops:
                input_grads = tuple(
                    None if g is None else g * FAULT_SCALE for g in input_grads
                )
            for inp, g in zip(node.inputs, input_grads):
                if g is None or not inp.requires_grad:
                    continue
                if g.shape != inp.shape:
                    raise ShapeError(
                        f"Backward rule of '{node.op}' produced a mis-shaped gradient",
                        g.shape,
                        inp.shape,
                    )
                previous = grads.get(id(inp))
                grads[id(inp)] = (inp, g if previous is None else previous[1] + g)
        return grads


def backward(loss: Tensor) -> Tape:
    if loss.size != 1:
        raise ShapeError("backward() requires a scalar loss", loss.shape)
    if not loss.requires_grad:
        raise NumericsError("Loss is not on the tape (nothing requires grad)")

    tape = Tape.record(loss)
    grads = tape.replay(loss, np.ones_like(loss.data))
    for t, g in grads.values():
        if not t.requires_grad:
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g
    logger.debug(f"Backward replayed {len(tape)} ops")
    return tape
