# Centralized state-value critic for the actor-critic path

from ..core.params import ParamStore
from ..core.rng import Rng
from ..core.tensor import Tensor, as_tensor
from ..exceptions import ShapeError
from .layers import MLP, Module


class Critic(Module):
    """V(s): state_dim -> hidden (relu) -> hidden (relu) -> 1."""

    def __init__(self, store: ParamStore, state_dim: int, rng: Rng, hidden: int = 64, prefix: str = "critic"):
        super().__init__(store, prefix)
        self.state_dim = state_dim
        self.mlp = MLP(store, f"{prefix}.mlp", [state_dim, hidden, hidden, 1], rng)

    def __call__(self, state) -> Tensor:
        state = as_tensor(state)
        if state.ndim != 2 or state.shape[1] != self.state_dim:
            raise ShapeError(self.prefix, [state.shape], f"state must be [B, {self.state_dim}]")
        return self.mlp(state).reshape(state.shape[0])


def critic_forward(critic: Critic, state) -> Tensor:
    return critic(state)
