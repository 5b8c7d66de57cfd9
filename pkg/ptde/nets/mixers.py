# Value-decomposition mixers
# Both map chosen per-agent Q-values [B, n] (plus the state for QMIX) to Q_tot [B].

from ..core import functional as F
from ..core.params import ParamStore
from ..core.rng import Rng
from ..core.tensor import Tensor, as_tensor
from ..exceptions import ShapeError
from .layers import MLP, Linear, Module


def _check_q(prefix: str, q: Tensor, n_agents: int) -> None:
    if q.ndim != 2 or q.shape[1] != n_agents:
        raise ShapeError(prefix, [q.shape], f"chosen Q-values must be [B, {n_agents}]")


class VDNMixer:
    """Q_tot = sum_i Q_i. Parameter-free."""

    prefix = "mixer"

    def __init__(self, n_agents: int):
        self.n_agents = n_agents

    def bind(self, store: ParamStore) -> "VDNMixer":
        return self

    def __call__(self, q_chosen, state=None) -> Tensor:
        q = as_tensor(q_chosen)
        _check_q(self.prefix, q, self.n_agents)
        return vdn_mix(q)


class QMixer(Module):
    """
    Monotonic mixing network.

    hidden = elu(q W1(s) + b1(s)), Q_tot = hidden w2(s) + V(s), where W1 and w2 are the
    absolute values of state-conditioned hypernetwork outputs, so dQ_tot/dQ_i >= 0.
    """

    def __init__(
        self, store: ParamStore, n_agents: int, state_dim: int, rng: Rng, embed: int = 32, prefix: str = "mixer"
    ):
        super().__init__(store, prefix)
        self.n_agents = n_agents
        self.state_dim = state_dim
        self.embed = embed
        self.hyper_w1 = Linear(store, f"{prefix}.hyper_w1", state_dim, n_agents * embed, rng.split(0))
        self.hyper_b1 = Linear(store, f"{prefix}.hyper_b1", state_dim, embed, rng.split(1))
        self.hyper_w2 = Linear(store, f"{prefix}.hyper_w2", state_dim, embed, rng.split(2))
        self.value = MLP(store, f"{prefix}.value", [state_dim, embed, 1], rng.split(3))

    def __call__(self, q_chosen, state) -> Tensor:
        q, state = as_tensor(q_chosen), as_tensor(state)
        _check_q(self.prefix, q, self.n_agents)
        if state.shape != (q.shape[0], self.state_dim):
            raise ShapeError(self.prefix, [q.shape, state.shape], f"state must be [B, {self.state_dim}]")
        batch = q.shape[0]

        w1 = F.abs_(self.hyper_w1(state)).reshape(batch, self.n_agents, self.embed)
        b1 = self.hyper_b1(state).reshape(batch, 1, self.embed)
        hidden = F.elu(F.matmul(q.reshape(batch, 1, self.n_agents), w1) + b1)
        w2 = F.abs_(self.hyper_w2(state)).reshape(batch, self.embed, 1)
        v = self.value(state).reshape(batch, 1, 1)
        return (F.matmul(hidden, w2) + v).reshape(batch)


def vdn_mix(q_chosen) -> Tensor:
    """Exact sum over the trailing agent axis."""
    return as_tensor(q_chosen).sum(axis=-1)


def qmix_mix(mixer: QMixer, q_chosen, state) -> Tensor:
    return mixer(q_chosen, state)
