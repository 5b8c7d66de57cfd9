# Finite-difference gradient oracle
# Compares reverse-mode gradients with central differences, one coordinate at a time

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..exceptions import NonFiniteError
from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def _scalar(value: Tensor) -> float:
    if value.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {value.shape}")
    result = value.item()
    if not np.isfinite(result):
        raise NonFiniteError("grad_check: function value is not finite")
    return result


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """
    Compare autodiff and central-difference gradients of ``f`` at ``x``.

    ``x`` is perturbed in place, so ``f`` may close over it (e.g. a parameter
    registered in a ParamStore). The relative error per coordinate is
    |a - n| / max(|a|, |n|, floor); ``floor`` keeps near-zero gradients from
    dividing by zero.

    Args:
        f: Scalar-valued function of x (may read x indirectly)
        x: Leaf tensor; its requires_grad flag is forced on for the check
        h: Finite-difference step
        tol: Maximum accepted relative error

    Raises:
        NonFiniteError: If any evaluation of f is non-finite
    """
    x.requires_grad = True
    x.grad = None
    out = f(x)
    _scalar(out)
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    numeric_flat = numeric.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = _scalar(f(x))
        flat[i] = original - h
        minus = _scalar(f(x))
        flat[i] = original
        numeric_flat[i] = (plus - minus) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / denom
    return GradCheckReport(float(rel.max()) if rel.size else 0.0, tol, analytic, numeric)
