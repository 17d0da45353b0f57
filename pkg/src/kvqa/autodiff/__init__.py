"""Reverse-mode automatic differentiation over dense numpy buffers."""

from . import ops
from .checkpoint import CheckpointError, load_tensors, save_tensors
from .gradcheck import GradCheckReport, grad_check, numeric_gradient
from .tensor import (
    Function,
    NonFiniteError,
    ParamStore,
    ShapeError,
    Tensor,
    debug_checks_enabled,
    default_dtype,
    grad_enabled,
    no_grad,
    set_debug_checks,
    set_default_dtype,
    use_precision,
)

__all__ = [
    "ops",
    "Tensor",
    "Function",
    "ParamStore",
    "ShapeError",
    "NonFiniteError",
    "no_grad",
    "grad_enabled",
    "set_default_dtype",
    "default_dtype",
    "use_precision",
    "set_debug_checks",
    "debug_checks_enabled",
    "grad_check",
    "numeric_gradient",
    "GradCheckReport",
    "save_tensors",
    "load_tensors",
    "CheckpointError",
]
