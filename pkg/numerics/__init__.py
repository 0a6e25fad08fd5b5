from numerics import ops
from numerics.functional import cosine_matrix, cosine_sim, l2_normalize_rows, linear
from numerics.gradcheck import grad_check, grad_check_params
from numerics.registry import get_op_registry
from numerics.tape import Tape, backward, inject_fault
from numerics.tensor import Tensor, is_grad_enabled, no_grad

__all__ = [
    "ops",
    "Tensor",
    "Tape",
    "backward",
    "no_grad",
    "is_grad_enabled",
    "inject_fault",
    "grad_check",
    "grad_check_params",
    "get_op_registry",
    "cosine_sim",
    "cosine_matrix",
    "l2_normalize_rows",
    "linear",
]
