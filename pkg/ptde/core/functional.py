# Differentiable tensor operations
# Each op validates its shape rule, computes the forward value with numpy and records a
# backward closure returning one gradient per parent (already reduced to the parent's shape).

from typing import Sequence

import numpy as np
from scipy import special

from ..exceptions import ShapeError
from .tensor import Tensor, as_tensor


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, [a.shape, b.shape], "not broadcastable") from None


### Elementwise binary ###


def add(a, b) -> Tensor:
    """a + b with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    """a - b with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Elementwise a * b with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    """Elementwise a / b with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return Tensor._make(out, (a, b), backward, "div")


def minimum(a, b) -> Tensor:
    """Elementwise minimum; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("minimum", a, b)
    take_a = a.data <= b.data

    def backward(g):
        return _unbroadcast(np.where(take_a, g, 0.0), a.shape), _unbroadcast(np.where(take_a, 0.0, g), b.shape)

    return Tensor._make(np.where(take_a, a.data, b.data), (a, b), backward, "minimum")


### Linear algebra ###


def matmul(a, b) -> Tensor:
    """
    Matrix product over the last two axes, batch axes broadcast.

    Shape rule: both operands have rank >= 2 and a.shape[-1] == b.shape[-2].
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", [a.shape, b.shape], "need (..., m, k) @ (..., k, n)")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError("matmul", [a.shape, b.shape], "batch axes not broadcastable") from None

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._make(a.data @ b.data, (a, b), backward, "matmul")


### Elementwise unary ###


def relu(a) -> Tensor:
    a = as_tensor(a)
    positive = a.data > 0

    def backward(g):
        return (np.where(positive, g, 0.0),)

    return Tensor._make(np.where(positive, a.data, 0.0), (a,), backward, "relu")


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    positive = a.data > 0
    neg_branch = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = np.where(positive, a.data, neg_branch)

    def backward(g):
        return (np.where(positive, g, g * (neg_branch + alpha)),)

    return Tensor._make(out, (a,), backward, "elu")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor._make(out, (a,), backward, "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = special.expit(a.data)

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor._make(out, (a,), backward, "sigmoid")


def softplus(a) -> Tensor:
    """log(1 + exp(a)), exactly 0 in the far negative tail."""
    a = as_tensor(a)

    def backward(g):
        return (g * special.expit(a.data),)

    return Tensor._make(np.logaddexp(0.0, a.data), (a,), backward, "softplus")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return Tensor._make(out, (a,), backward, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g / a.data,)

    return Tensor._make(np.log(a.data), (a,), backward, "log")


def abs_(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (g * np.sign(a.data),)

    return Tensor._make(np.abs(a.data), (a,), backward, "abs")


def clip(a, low: float, high: float) -> Tensor:
    """Clamp into [low, high]; gradient passes where the input is inside the interval."""
    a = as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)

    def backward(g):
        return (np.where(inside, g, 0.0),)

    return Tensor._make(np.clip(a.data, low, high), (a,), backward, "clip")


### Normalisations over the last axis ###


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    out = special.softmax(a.data, axis=axis)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return Tensor._make(out, (a,), backward, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    out = special.log_softmax(a.data, axis=axis)

    def backward(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return Tensor._make(out, (a,), backward, "log_softmax")


### Structural ###


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    """Concatenate along ``axis``; all other dims must agree."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", [], "nothing to concatenate")
    ndim = tensors[0].ndim
    shapes = [t.shape for t in tensors]
    ax = axis % ndim if ndim else 0
    if any(t.ndim != ndim for t in tensors) or any(
        s[:ax] + s[ax + 1 :] != shapes[0][:ax] + shapes[0][ax + 1 :] for s in shapes
    ):
        raise ShapeError("concat", shapes, f"dims must agree except axis {axis}")
    bounds = np.cumsum([s[ax] for s in shapes])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    """Stack equally shaped tensors along a new axis."""
    tensors = [as_tensor(t) for t in tensors]
    shapes = [t.shape for t in tensors]
    if not tensors or any(s != shapes[0] for s in shapes):
        raise ShapeError("stack", shapes, "all inputs must share one shape")
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(out, tensors, backward, "stack")


def slice_(a, index) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate in backward."""
    a = as_tensor(a)
    try:
        out = a.data[index]
    except IndexError as e:
        raise ShapeError("slice", [a.shape], str(e)) from None

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._make(np.array(out, dtype=np.float64), (a,), backward, "slice")


def gather(a, indices) -> Tensor:
    """Pick one entry of the last axis per row: out[...] = a[..., indices[...]]."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape != a.shape[:-1]:
        raise ShapeError("gather", [a.shape, indices.shape], "indices must match all but the last axis")
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[-1]):
        raise ShapeError("gather", [a.shape, indices.shape], "index out of range")
    picked = np.take_along_axis(a.data, indices[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, indices[..., None], g[..., None], axis=-1)
        return (full,)

    return Tensor._make(picked, (a,), backward, "gather")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", [a.shape, tuple(shape)], "size mismatch") from None

    def backward(g):
        return (g.reshape(a.shape),)

    return Tensor._make(out, (a,), backward, "reshape")


### Reductions ###


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._make(out, (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    out = np.mean(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return Tensor._make(out, (a,), backward, "mean")


def mse(a, b) -> Tensor:
    """Mean squared error over all elements; both shapes must match exactly."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("mse", [a.shape, b.shape], "shapes must be equal")
    diff = a.data - b.data
    n = max(diff.size, 1)

    def backward(g):
        grad = 2.0 * g * diff / n
        return grad, -grad

    return Tensor._make(np.mean(diff * diff) if diff.size else 0.0, (a, b), backward, "mse")


# Registry used by forward_op; keys are the op kinds the engine exposes by name
OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "minimum": minimum,
    "relu": relu,
    "elu": elu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "exp": exp,
    "log": log,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "abs": abs_,
    "clip": clip,
    "concat": lambda *tensors, axis=-1: concat(tensors, axis=axis),
    "stack": lambda *tensors, axis=0: stack(tensors, axis=axis),
    "slice": slice_,
    "gather": gather,
    "reshape": reshape,
    "sum": sum_,
    "mean": mean,
    "mse": mse,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """
    Apply the op named ``kind`` to ``inputs``.

    Args:
        kind: One of the keys of ``OPS``
        *inputs: Tensors (or array-likes, wrapped as constants)
        **kwargs: Op parameters such as ``axis`` or ``index``

    Raises:
        ShapeError: If the inputs violate the op's shape rule
        KeyError: If ``kind`` is not a known op
    """
    try:
        op = OPS[kind]
    except KeyError:
        raise KeyError(f"unknown op kind {kind!r}; expected one of {sorted(OPS)}") from None
    return op(*inputs, **kwargs)
