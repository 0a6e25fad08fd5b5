import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from numerics import ops
from numerics.registry import OpRegistry, get_op_registry
from numerics.tensor import Tensor, no_grad
from utils.errors import GradCheckError

logger = logging.getLogger(__name__)

MIN_STEP = 1e-7
MAX_STEP = 1e-3
DEFAULT_STEP = 1e-6

Probe = Callable[[np.random.Generator], float]


def _validate_step(h: float) -> None:
    if not MIN_STEP <= h <= MAX_STEP:
        raise GradCheckError(
            f"Finite-difference step must lie in [{MIN_STEP}, {MAX_STEP}]",
            details={"h": h},
        )


def grad_check_params(
    f: Callable[[], Tensor], params: Sequence[Tensor], h: float = DEFAULT_STEP
) -> float:
    """对 params 中每个坐标做中心差分，和 backward 的结果比较。
    返回 max |analytic - numeric| / max(1, |analytic|)"""
    _validate_step(h)
    for p in params:
        p.zero_grad()
    out = f()
    if out.size != 1:
        raise GradCheckError("grad_check needs a scalar-valued function", details={"shape": out.shape})
    out.backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for p, grad in zip(params, analytic):
            for i in range(p.size):
                original = p.data.flat[i]
                p.data.flat[i] = original + h
                f_plus = f().item()
                p.data.flat[i] = original - h
                f_minus = f().item()
                p.data.flat[i] = original
                numeric = (f_plus - f_minus) / (2.0 * h)
                a = grad.flat[i]
                worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, h: float = DEFAULT_STEP
) -> float:
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    probe = Tensor(data, requires_grad=True)
    return grad_check_params(lambda: f(probe), [probe], h)


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """用随机权重把输出压成标量，避免 sum(softmax) 这种梯度恒为 0 的退化情况"""
    return ops.sum(ops.mul(out, Tensor(weights)))


def _unary_probe(op: Callable[[Tensor], Tensor], sampler: Callable[[np.random.Generator], np.ndarray]) -> Probe:
    def probe(rng: np.random.Generator) -> float:
        x = sampler(rng)
        w = rng.normal(size=op(Tensor(x)).shape)
        return grad_check(lambda t: weighted_sum(op(t), w), x)

    return probe


def _binary_probe(
    op: Callable[[Tensor, Tensor], Tensor],
    shape_a: tuple[int, ...],
    shape_b: tuple[int, ...],
    positive_b: bool = False,
) -> Probe:
    def probe(rng: np.random.Generator) -> float:
        a = Tensor(rng.normal(size=shape_a), requires_grad=True)
        b_data = rng.uniform(0.5, 2.0, size=shape_b) if positive_b else rng.normal(size=shape_b)
        b = Tensor(b_data, requires_grad=True)
        w = rng.normal(size=op(a, b).shape)
        return grad_check_params(lambda: weighted_sum(op(a, b), w), [a, b])

    return probe


def _normal(*shape: int) -> Callable[[np.random.Generator], np.ndarray]:
    return lambda rng: rng.normal(size=shape)


def _positive(*shape: int) -> Callable[[np.random.Generator], np.ndarray]:
    return lambda rng: rng.uniform(0.2, 3.0, size=shape)


def _clip_input(rng: np.random.Generator) -> np.ndarray:
    x = rng.uniform(-2.0, 2.0, size=(3, 4))
    # 远离折点
    near = np.abs(np.abs(x) - 1.0) < 1e-3
    return np.where(near, x + 0.01, x)


def _matmul_probe(rng: np.random.Generator) -> float:
    a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    w = rng.normal(size=(2, 3, 2))
    return grad_check_params(lambda: weighted_sum(ops.matmul(a, b), w), [a, b])


def _concat_probe(rng: np.random.Generator) -> float:
    a = Tensor(rng.normal(size=(1, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    w = rng.normal(size=(3, 3))
    return grad_check_params(lambda: weighted_sum(ops.concat([a, b], axis=0), w), [a, b])


def _gather_probe(rng: np.random.Generator) -> float:
    rows = np.array([0, 1, 1, 2])
    cols = np.array([2, 0, 0, 1])
    w = rng.normal(size=(4, 5))
    return grad_check(
        lambda t: weighted_sum(ops.gather(t, (rows, cols)), w), rng.normal(size=(3, 3, 5))
    )


def _straight_through_probe(rng: np.random.Generator) -> float:
    """straight-through 的 backward 按定义就是恒等映射，所以检查梯度是否原样传回"""
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    w = rng.normal(size=(4, 3))
    weighted_sum(ops.straight_through_onehot(x, axis=-1), w).backward()
    assert x.grad is not None
    return float(np.max(np.abs(x.grad - w)))


PRIMITIVE_PROBES: dict[str, Probe] = {
    "add": _binary_probe(ops.add, (2, 3), (3,)),
    "sub": _binary_probe(ops.sub, (2, 3), (2, 3)),
    "mul": _binary_probe(ops.mul, (2, 3), (3,)),
    "div": _binary_probe(ops.div, (2, 3), (2, 3), positive_b=True),
    "scale": _unary_probe(lambda t: ops.scale(t, -2.5), _normal(3, 2)),
    "matmul": _matmul_probe,
    "transpose": _unary_probe(ops.transpose, _normal(2, 3, 4)),
    "reshape": _unary_probe(lambda t: ops.reshape(t, (3, 4)), _normal(2, 6)),
    "sum": _unary_probe(lambda t: ops.sum(t, axis=1), _normal(3, 4)),
    "mean": _unary_probe(lambda t: ops.mean(t, axis=0, keepdims=True), _normal(3, 4)),
    "exp": _unary_probe(ops.exp, _normal(3, 3)),
    "log": _unary_probe(ops.log, _positive(3, 3)),
    "sqrt": _unary_probe(ops.sqrt, _positive(3, 3)),
    "sigmoid": _unary_probe(ops.sigmoid, _normal(5)),
    "softplus": _unary_probe(ops.softplus, _normal(5)),
    "softmax": _unary_probe(lambda t: ops.softmax(t, axis=-1), _normal(5)),
    "log_softmax": _unary_probe(lambda t: ops.log_softmax(t, axis=0), _normal(4, 3)),
    "clip": _unary_probe(lambda t: ops.clip(t, -1.0, 1.0), _clip_input),
    "max": _unary_probe(lambda t: ops.max(t, axis=1), _normal(3, 5)),
    "concat": _concat_probe,
    "slice": _unary_probe(lambda t: ops.slice_axis(t, 1, 3, axis=1), _normal(2, 4, 3)),
    "gather": _gather_probe,
    "broadcast_to": _unary_probe(lambda t: ops.broadcast_to(t, (2, 3, 4)), _normal(3, 1)),
    "straight_through_onehot": _straight_through_probe,
}


@dataclass
class GradCheckResult:
    name: str
    kind: str  # primitive | composite
    max_rel_error: float
    trials: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error <= self.tolerance

    def to_dict(self) -> dict[str, object]:
        return {
            "name": self.name,
            "kind": self.kind,
            "max_rel_error": self.max_rel_error,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def run_probe(
    name: str, probe: Probe, seed: int, trials: int, tolerance: float, kind: str
) -> GradCheckResult:
    worst = 0.0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        try:
            worst = max(worst, probe(rng))
        except Exception:
            logger.exception(f"Gradient probe '{name}' raised an unexpected error")
            worst = float("inf")
            break
    logger.debug(f"{name}: max relative error {worst:.3e} over {trials} trials")
    return GradCheckResult(name, kind, worst, trials, tolerance)


def check_primitives(
    seed: int,
    trials: int = 10,
    tolerance: float = 1e-4,
    registry: OpRegistry | None = None,
) -> list[GradCheckResult]:
    """对 registry 里每个 op 恰好检查一次；没有 probe 的 op 记为 inf（registry 不完整）"""
    registry = registry or get_op_registry()
    results: list[GradCheckResult] = []
    for spec in registry.get_ops():
        probe = PRIMITIVE_PROBES.get(spec.name)
        if probe is None:
            logger.warning(f"No gradient probe for registered op '{spec.name}'")
            results.append(GradCheckResult(spec.name, "primitive", float("inf"), 0, tolerance))
            continue
        results.append(run_probe(spec.name, probe, seed, trials, tolerance, "primitive"))
    return results
