# Dense tensor with reverse-mode automatic differentiation
# Graphs are built define-by-run: every op on a tensor that requires grad records its parents
# and a closure mapping the output gradient to parent gradients.

import os
from contextlib import contextmanager
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import GradientError, NonFiniteError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_debug = os.environ.get("PTDE_DEBUG", "") == "1"
_grad_enabled = True


def set_debug(enabled: bool) -> None:
    """Turn the non-finite assertion mode on or off for every op output."""
    global _debug
    _debug = bool(enabled)


def debug_enabled() -> bool:
    return _debug


@contextmanager
def no_grad():
    """Build no graph inside the block; outputs never require grad."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


def _consumed(grad: np.ndarray):
    raise GradientError("graph already consumed by a previous backward()")


class Tensor:
    """
    Dense float64 array with optional gradient tracking.

    Leaves (tensors created directly, e.g. parameters) accumulate gradients in
    ``grad``. Intermediate tensors keep references to their parents until
    ``backward`` runs; afterwards the graph is released and cannot be
    differentiated again.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        if _debug:
            _check_finite(self.data, "leaf")

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out.op = op
        if _debug:
            _check_finite(out.data, op)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # Introspection

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out.op = "leaf"
        out._parents = ()
        out._backward = None
        return out

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # Differentiation

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf that requires grad.

        Args:
            grad: Seed gradient; only optional when self is a scalar

        Raises:
            GradientError: If self is not scalar and no seed is given, or self
                does not depend on any tensor that requires grad
        """
        if grad is None and self.data.size != 1:
            raise GradientError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GradientError("backward() called on a tensor that does not require grad")

        seed = np.ones_like(self.data) if grad is None else np.asarray(grad, dtype=np.float64)
        order = _topological_order(self)
        pending = {id(self): seed}

        for node in reversed(order):
            node_grad = pending.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = _consumed

    # Operator sugar; the op implementations live in functional

    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F

        if isinstance(other, Tensor):
            return F.div(self, other)
        return F.mul(self, 1.0 / float(other))

    def __neg__(self):
        from . import functional as F

        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index):
        from . import functional as F

        return F.slice_(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        from . import functional as F

        return F.sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")


def _topological_order(root: Tensor) -> list:
    """Iterative post-order over the requires-grad subgraph (parents before children)."""
    order, visited = [], set()
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value) -> Tensor:
    """Wrap non-tensors as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)
