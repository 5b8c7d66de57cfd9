# Adam optimizer over a ParamStore

from typing import Dict, Optional

import numpy as np

from ..exceptions import GradientError
from .params import ParamStore

DEFAULT_LR = 5e-4


class Adam:
    """
    Adam (beta1=0.9, beta2=0.999, eps=1e-8) with bias correction.

    Only parameters whose name starts with ``prefix`` are updated, so one store
    can hold networks trained by different optimizers (stage-1 nets vs. the
    stage-2 student).
    """

    def __init__(
        self,
        store: ParamStore,
        lr: float = DEFAULT_LR,
        betas: tuple = (0.9, 0.999),
        eps: float = 1e-8,
        prefixes: tuple = ("",),
    ):
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.prefixes = tuple(prefixes)
        self.t = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def parameters(self):
        for name, tensor in self.store.items():
            if tensor.requires_grad and name.startswith(self.prefixes):
                yield name, tensor

    def zero_grad(self) -> None:
        for _, tensor in self.parameters():
            tensor.zero_grad()

    def step(self, lr: Optional[float] = None) -> None:
        """
        Apply one Adam update and zero the gradients.

        Raises:
            GradientError: If a registered parameter has no gradient buffer
        """
        lr = self.lr if lr is None else lr
        params = list(self.parameters())
        missing = [name for name, tensor in params if tensor.grad is None]
        if missing:
            raise GradientError(f"missing gradients for registered parameters: {missing}")

        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, tensor in params:
            grad = tensor.grad
            m = self._m.setdefault(name, np.zeros_like(tensor.data))
            v = self._v.setdefault(name, np.zeros_like(tensor.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            tensor.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            tensor.zero_grad()


def optimizer_step(optimizer: Adam, lr: Optional[float] = None) -> None:
    """Functional alias for ``optimizer.step``."""
    optimizer.step(lr)
