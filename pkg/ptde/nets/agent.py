# Recurrent per-agent network
# One network shared by every agent (the agent id one-hot in LocalInfo tells them apart)

from typing import Optional, Tuple, Union

import numpy as np

from ..core import functional as F
from ..core.params import ParamStore
from ..core.rng import Rng
from ..core.tensor import Tensor, as_tensor
from ..exceptions import ShapeError
from ..interfaces import LocalInfo
from .layers import GRUCell, Linear, Module, zero_hidden

LocalInput = Union[LocalInfo, np.ndarray, Tensor]


def local_rows(local: LocalInput) -> Tensor:
    """Flattened [N, local_dim] rows of a LocalInfo (arrays and tensors pass through)."""
    if isinstance(local, LocalInfo):
        return Tensor(local.as_array())
    return as_tensor(local)


class AgentNetwork(Module):
    """
    fc1 (relu) -> GRU cell -> fc2 over [h, z].

    The same module serves as the value head (Q-values, prefix ``agent``) and as the
    actor (action logits, prefix ``actor``). When ``d_z`` is 0 the network takes no message.
    """

    def __init__(
        self,
        store: ParamStore,
        prefix: str,
        local_dim: int,
        n_actions: int,
        rng: Rng,
        d_h: int = 64,
        d_z: int = 0,
    ):
        super().__init__(store, prefix)
        self.local_dim = local_dim
        self.n_actions = n_actions
        self.d_h = d_h
        self.d_z = d_z
        self.fc1 = Linear(store, f"{prefix}.fc1", local_dim, d_h, rng.split(0))
        self.rnn = GRUCell(store, f"{prefix}.rnn", d_h, d_h, rng.split(1))
        self.fc2 = Linear(store, f"{prefix}.fc2", d_h + d_z, n_actions, rng.split(2))

    @property
    def uses_message(self) -> bool:
        return self.d_z > 0

    def initial_hidden(self, n_rows: int) -> np.ndarray:
        return zero_hidden(n_rows, self.d_h)

    def forward(self, local: LocalInput, hidden, message: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
        """
        Advance the recurrent state one step.

        Args:
            local: N rows of local information
            hidden: [N, d_h] recurrent state
            message: [N, d_z] message rows, required iff the network was built with d_z > 0

        Returns:
            (outputs [N, n_actions], new hidden [N, d_h])

        Raises:
            ShapeError: If the message presence or width does not match the network
        """
        x = local_rows(local)
        if message is None and self.uses_message:
            raise ShapeError(self.prefix, [x.shape, (self.d_z,)], "network expects a message")
        if message is not None:
            message = as_tensor(message)
            if not self.uses_message or message.shape != (x.shape[0], self.d_z):
                raise ShapeError(self.prefix, [x.shape, message.shape], f"message must be [N, {self.d_z}]")

        h = self.rnn(F.relu(self.fc1(x)), hidden)
        head = h if message is None else F.concat([h, message], axis=-1)
        return self.fc2(head), h

    __call__ = forward


def agent_forward(
    network: AgentNetwork, local: LocalInput, hidden, message: Optional[Tensor] = None
) -> Tuple[Tensor, Tensor]:
    """Q-values (or actor logits) and the next hidden state for N agent rows."""
    return network.forward(local, hidden, message)


def actor_forward(
    network: AgentNetwork, local: LocalInput, hidden, message: Optional[Tensor] = None
) -> Tuple[Tensor, Tensor]:
    """Action logits and the next hidden state; softmax of the logits is the policy."""
    return network.forward(local, hidden, message)
