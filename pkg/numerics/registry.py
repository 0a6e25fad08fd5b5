import logging
from dataclasses import dataclass
from typing import Callable, TypeVar

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable)


@dataclass(frozen=True)
class OpSpec:
    """一个可微 primitive 的登记信息"""

    name: str
    fn: Callable
    description: str
    # finite_difference: 用中心差分检查；pass_through: 检查 backward 是否原样传递梯度
    check: str = "finite_difference"


class OpRegistry:
    def __init__(self) -> None:
        self._ops: dict[str, OpSpec] = {}

    def register(self, spec: OpSpec) -> None:
        if spec.name in self._ops:
            logger.warning(f"Overwriting existing op: {spec.name}")
        self._ops[spec.name] = spec
        logger.debug(f"Registered op: {spec.name}")

    def get(self, name: str) -> OpSpec | None:
        return self._ops.get(name)

    def get_ops(self) -> list[OpSpec]:
        return list(self._ops.values())

    def names(self) -> list[str]:
        return list(self._ops.keys())

    def __contains__(self, name: str) -> bool:
        return name in self._ops

    def __len__(self) -> int:
        return len(self._ops)


_registry = OpRegistry()


def get_op_registry() -> OpRegistry:
    return _registry


def differentiable(
    name: str, description: str, check: str = "finite_difference"
) -> Callable[[F], F]:
    def decorator(fn: F) -> F:
        _registry.register(OpSpec(name=name, fn=fn, description=description, check=check))
        return fn

    return decorator
