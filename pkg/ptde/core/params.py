# Named parameter store
# Ordered map from hierarchical names ("gis.hyper.w1") to leaf tensors

from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from ..exceptions import CheckpointError, ShapeError
from .tensor import Tensor


class ParamStore:
    """
    Ordered, name-unique collection of trainable tensors.

    Networks register their parameters here under a prefix and read them back by
    name on every forward pass, so loading values in place (``load_state``,
    ``copy_from``) is immediately visible to every network sharing the store.
    """

    def __init__(self):
        self._entries: Dict[str, Tensor] = {}

    def add(self, name: str, value, requires_grad: bool = True) -> Tensor:
        """
        Register a new parameter.

        Raises:
            KeyError: If ``name`` is already registered
        """
        if name in self._entries:
            raise KeyError(f"parameter {name!r} already registered")
        tensor = value if isinstance(value, Tensor) else Tensor(value, requires_grad=requires_grad)
        tensor.requires_grad = requires_grad
        self._entries[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def names(self, prefix: str = "") -> list:
        return [name for name in self._entries if name.startswith(prefix)]

    def items(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self._entries.items():
            if name.startswith(prefix):
                yield name, tensor

    def has_prefix(self, prefix: str) -> bool:
        return any(name.startswith(prefix) for name in self._entries)

    def zero_grad(self, prefix: str = "") -> None:
        for _, tensor in self.items(prefix):
            tensor.zero_grad()

    def clear_grad(self, prefix: str = "") -> None:
        """Drop gradient buffers entirely (grad becomes None)."""
        for _, tensor in self.items(prefix):
            tensor.grad = None

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.items(prefix)}

    def load_state(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """
        Copy values into the registered tensors in place.

        Args:
            state: Mapping name -> array
            strict: Require every registered name to be present in ``state``

        Raises:
            CheckpointError: If a strict load misses names
            ShapeError: If an array's shape differs from the registered tensor
        """
        missing = [name for name in self._entries if name not in state]
        if strict and missing:
            raise CheckpointError(f"missing parameters: {missing}")
        for name, tensor in self._entries.items():
            if name not in state:
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ShapeError("load_state", [tensor.shape, value.shape], name)
            np.copyto(tensor.data, value)

    def copy_from(self, other: "ParamStore", prefix: str = "") -> None:
        """Bitwise copy of every ``prefix`` parameter of ``other`` into this store."""
        self.load_state(other.state_dict(prefix), strict=False)

    def freeze(self, prefix: str = "") -> None:
        for _, tensor in self.items(prefix):
            tensor.requires_grad = False

    def grad_norm(self, prefix: str = "") -> float:
        total = 0.0
        for _, tensor in self.items(prefix):
            if tensor.grad is not None:
                total += float(np.sum(tensor.grad * tensor.grad))
        return float(np.sqrt(total))

    def clip_grad_norm(self, max_norm: Optional[float], prefix: str = "") -> float:
        """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
        norm = self.grad_norm(prefix)
        if max_norm is not None and norm > max_norm > 0:
            scale = max_norm / (norm + 1e-12)
            for _, tensor in self.items(prefix):
                if tensor.grad is not None:
                    tensor.grad *= scale
        return norm
