"""Dense numeric arrays with reverse-mode automatic differentiation.

The expression graph is recorded eagerly: every primitive application links
its output tensor back to the producing :class:`Function`, and ``backward``
replays the tape in reverse topological order. Tensors are treated as
immutable after construction; only the optimizer mutates parameter buffers,
and it requires exclusive access.

Two global run flags live here:

* the default float width (64-bit for verification, 32-bit for training),
* debug checks, which make any non-finite primitive output a hard error.
"""

from __future__ import annotations

import numpy as np

_DEFAULT_DTYPE = np.float64
_DEBUG_CHECKS = False
_GRAD_ENABLED = True

_FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when a primitive receives operands of incompatible shapes."""


class NonFiniteError(FloatingPointError):
    """Raised in debug mode when a primitive produces NaN or Inf."""


def set_default_dtype(dtype):
    """Set the float width used for newly created tensors."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in _FLOAT_DTYPES:
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


def use_precision(mode: str):
    """Select a precision mode: 'test' is 64-bit, 'train' is 32-bit."""
    if mode == "test":
        set_default_dtype(np.float64)
    elif mode == "train":
        set_default_dtype(np.float32)
    else:
        raise ValueError(f"unknown precision mode {mode!r}")


def set_debug_checks(enabled: bool):
    """Toggle per-op NaN/Inf detection (off by default: it costs a scan)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


class no_grad:
    """Context manager that disables tape recording (evaluation mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_ctx")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        # Bare python scalars take the session dtype so literals like `1.0`
        # never upcast a 32-bit graph.
        scalar_literal = isinstance(data, (int, float))
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif scalar_literal or arr.dtype.type not in _FLOAT_DTYPES:
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._ctx = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    # Reverse pass -----------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        ``self`` must be a scalar produced by at least one recorded op.
        Parameters that do not lie on a path to ``self`` keep ``grad=None``,
        which readers must treat as an all-zero gradient.
        """
        if self.data.ndim != 0:
            raise ValueError(
                f"backward requires a scalar output, got shape {self.data.shape}"
            )
        if self._ctx is None:
            raise RuntimeError("backward called on a tensor with no recorded ops")
        order = _toposort(self)
        self.grad = np.ones((), dtype=self.data.dtype)
        for node in reversed(order):
            ctx = node._ctx
            grads = ctx.backward(node.grad)
            for parent, g in zip(ctx.inputs, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g

    # Operator sugar ---------------------------------------------------

    def __add__(self, other):
        from . import ops

        return ops.add(self, _wrap(other))

    def __radd__(self, other):
        from . import ops

        return ops.add(_wrap(other), self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, _wrap(other))

    def __rmul__(self, other):
        from . import ops

        return ops.mul(_wrap(other), self)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, _wrap(other))

    def __rsub__(self, other):
        from . import ops

        return ops.sub(_wrap(other), self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, _wrap(other))

    def __getitem__(self, key):
        from . import ops

        return ops.index(self, key)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _toposort(root: Tensor):
    """Iterative post-order over op-produced tensors reachable from ``root``."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._ctx.inputs:
            if parent._ctx is not None and parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


class Function:
    """One primitive application: forward rule plus its adjoint.

    Subclasses implement ``forward(*arrays)`` returning an ndarray and
    ``backward(grad)`` returning one gradient array (or None) per input,
    in input order. ``apply`` wires the output tensor into the tape.
    """

    op_name = "?"

    def __init__(self):
        self.inputs = ()
        self.needs = ()

    @classmethod
    def apply(cls, *args, **kwargs):
        fn = cls()
        fn.inputs = args
        fn.needs = tuple(t.requires_grad for t in args)
        try:
            out_data = fn.forward(*[t.data for t in args], **kwargs)
        except ValueError as exc:
            shapes = ", ".join(str(t.data.shape) for t in args)
            raise ShapeError(f"{cls.op_name}: incompatible shapes [{shapes}]: {exc}") from exc
        if _DEBUG_CHECKS and not np.all(np.isfinite(out_data)):
            raise NonFiniteError(f"{cls.op_name}: non-finite values in output")
        out = Tensor.__new__(Tensor)
        out.data = out_data
        out.grad = None
        if _GRAD_ENABLED and any(fn.needs):
            out.requires_grad = True
            out._ctx = fn
        else:
            out.requires_grad = False
            out._ctx = None
        return out

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class ParamStore:
    """Named leaf tensors (the learnable parameters of a graph).

    Iteration order is insertion order; the optimizer sorts by name so the
    reduction order of updates never depends on construction details.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=_DEFAULT_DTYPE), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def gradients(self) -> dict[str, np.ndarray]:
        """Per-parameter gradients; parameters off the loss path come back zero."""
        out = {}
        for name, t in self._params.items():
            out[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(
                f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}"
            )
        for name, arr in state.items():
            t = self._params[name]
            if t.data.shape != arr.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: {t.data.shape} vs {arr.shape}"
                )
            t.data = arr.astype(t.data.dtype, copy=False)

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}
