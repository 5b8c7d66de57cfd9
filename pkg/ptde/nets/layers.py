# Parameterized building blocks
# Modules keep parameter names, not tensors: every forward pass reads the current values from
# the ParamStore they are bound to, so rebinding a module to a second store (target networks)
# is a shallow copy.

import copy

import numpy as np

from ..core import functional as F
from ..core.params import ParamStore
from ..core.rng import Rng
from ..core.tensor import Tensor, as_tensor
from ..exceptions import ShapeError


class Module:
    """Base class for everything that owns parameters under a dotted prefix."""

    def __init__(self, store: ParamStore, prefix: str):
        self.store = store
        self.prefix = prefix

    def param(self, name: str) -> Tensor:
        return self.store[f"{self.prefix}.{name}"]

    def bind(self, store: ParamStore) -> "Module":
        """Shallow copy of this module (and its submodules) reading parameters from ``store``."""
        clone = copy.copy(self)
        clone.store = store
        for key, value in vars(self).items():
            if isinstance(value, Module):
                setattr(clone, key, value.bind(store))
        return clone


class Linear(Module):
    """y = x @ W + b with W stored as [in_dim, out_dim]; init U(-1/sqrt(in), 1/sqrt(in))."""

    def __init__(self, store: ParamStore, prefix: str, in_dim: int, out_dim: int, rng: Rng):
        super().__init__(store, prefix)
        self.in_dim = in_dim
        self.out_dim = out_dim
        bound = 1.0 / np.sqrt(in_dim)
        store.add(f"{prefix}.weight", rng.uniform(-bound, bound, size=(in_dim, out_dim)))
        store.add(f"{prefix}.bias", rng.uniform(-bound, bound, size=(out_dim,)))

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim < 2 or x.shape[-1] != self.in_dim:
            raise ShapeError(self.prefix, [x.shape, (self.in_dim, self.out_dim)], "input width mismatch")
        return F.matmul(x, self.param("weight")) + self.param("bias")


class MLP(Module):
    """Stack of Linear layers with relu between them (none after the last)."""

    def __init__(self, store: ParamStore, prefix: str, dims: list, rng: Rng):
        super().__init__(store, prefix)
        self.layers = [
            Linear(store, f"{prefix}.fc{k + 1}", dims[k], dims[k + 1], rng.split(k)) for k in range(len(dims) - 1)
        ]

    def bind(self, store: ParamStore) -> "MLP":
        clone = super().bind(store)
        clone.layers = [layer.bind(store) for layer in self.layers]
        return clone

    def __call__(self, x) -> Tensor:
        out = as_tensor(x)
        for k, layer in enumerate(self.layers):
            out = layer(out)
            if k < len(self.layers) - 1:
                out = F.relu(out)
        return out


class GRUCell(Module):
    """
    Gated recurrent unit, gates ordered (reset, update, candidate):

        r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
        u = sigmoid(x W_iu + b_iu + h W_hu + b_hu)
        n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - u) * n + u * h
    """

    def __init__(self, store: ParamStore, prefix: str, in_dim: int, hidden_dim: int, rng: Rng):
        super().__init__(store, prefix)
        self.hidden_dim = hidden_dim
        self.input_map = Linear(store, f"{prefix}.input", in_dim, 3 * hidden_dim, rng.split(0))
        self.hidden_map = Linear(store, f"{prefix}.hidden", hidden_dim, 3 * hidden_dim, rng.split(1))

    def __call__(self, x, h) -> Tensor:
        h = as_tensor(h)
        if h.ndim != 2 or h.shape[1] != self.hidden_dim:
            raise ShapeError(self.prefix, [h.shape, (self.hidden_dim,)], "hidden width mismatch")
        gi = self.input_map(x)
        gh = self.hidden_map(h)
        d = self.hidden_dim
        reset = F.sigmoid(gi[:, 0:d] + gh[:, 0:d])
        update = F.sigmoid(gi[:, d : 2 * d] + gh[:, d : 2 * d])
        candidate = F.tanh(gi[:, 2 * d :] + reset * gh[:, 2 * d :])
        return (1.0 - update) * candidate + update * h


def zero_hidden(n_rows: int, width: int) -> np.ndarray:
    return np.zeros((n_rows, width))
