# Global-information message sources
# GIU: one message per timestep computed from the global state and shared by all agents.
# GIS: a hypernetwork maps each agent's local information to the weights of a private
# state layer, so every agent reads the global state through its own projection. A shared
# generator turns the specialized features into N(mu, sigma^2); z is sampled by reparameterization.

from typing import Optional, Tuple

import numpy as np

from ..core import functional as F
from ..core.params import ParamStore
from ..core.rng import Rng
from ..core.tensor import Tensor, as_tensor
from ..exceptions import ShapeError
from ..interfaces import LocalInfo, MessageSource, SpecializedMessage
from .agent import LocalInput, local_rows
from .layers import Linear, Module


class DistributionGenerator(Module):
    """Maps features g to (mu, sigma) with sigma = sigma_min + softplus(raw) >= sigma_min."""

    def __init__(self, store: ParamStore, prefix: str, d_g: int, d_z: int, sigma_min: float, rng: Rng):
        super().__init__(store, prefix)
        self.sigma_min = sigma_min
        self.mu_head = Linear(store, f"{prefix}.mu", d_g, d_z, rng.split(0))
        self.sigma_head = Linear(store, f"{prefix}.sigma", d_g, d_z, rng.split(1))

    def __call__(self, g: Tensor) -> Tuple[Tensor, Tensor]:
        mu = self.mu_head(g)
        sigma = F.softplus(self.sigma_head(g)) + self.sigma_min
        return mu, sigma


def reparameterize(
    mu: Tensor,
    sigma: Tensor,
    rng: Optional[Rng] = None,
    sample: bool = True,
    noise: Optional[np.ndarray] = None,
) -> SpecializedMessage:
    """
    z = mu + sigma * eps with eps ~ N(0, I); z = mu when not sampling.

    Raises:
        ValueError: If sampling is requested without a noise source
        ShapeError: If pre-drawn noise does not match mu
    """
    if not sample:
        return SpecializedMessage(mu=mu, sigma=sigma, z=mu, noise=np.zeros(mu.shape))
    if noise is None:
        if rng is None:
            raise ValueError("sampling a message needs an rng or pre-drawn noise")
        noise = rng.normal(size=mu.shape)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != mu.shape:
        raise ShapeError("reparameterize", [mu.shape, noise.shape], "noise must match mu")
    return SpecializedMessage(mu=mu, sigma=sigma, z=mu + sigma * noise, noise=noise)


class GIUModule(Module, MessageSource):
    """Global Information Unified: state -> relu(d_g) -> N(mu, sigma^2), identical for every agent."""

    def __init__(
        self,
        store: ParamStore,
        state_dim: int,
        n_agents: int,
        rng: Rng,
        d_g: int = 32,
        d_z: int = 8,
        sigma_min: float = 0.05,
        prefix: str = "giu",
    ):
        super().__init__(store, prefix)
        self.state_dim = state_dim
        self.n_agents = n_agents
        self.d_z = d_z
        self.encoder = Linear(store, f"{prefix}.encoder", state_dim, d_g, rng.split(0))
        self.generator = DistributionGenerator(store, f"{prefix}.generator", d_g, d_z, sigma_min, rng.split(1))

    def forward(
        self,
        local: LocalInput,
        state,
        rng: Optional[Rng] = None,
        sample: bool = True,
        noise: Optional[np.ndarray] = None,
    ) -> SpecializedMessage:
        state = as_tensor(state)
        if state.ndim != 2 or state.shape[1] != self.state_dim or state.shape[0] % self.n_agents:
            raise ShapeError(self.prefix, [state.shape], f"state must be [B * {self.n_agents}, {self.state_dim}]")

        # rows are laid out b * n_agents + i, so every n_agents-th row is one per step
        per_step = state[:: self.n_agents]
        mu, sigma = self.generator(F.relu(self.encoder(per_step)))
        step_noise = None if noise is None else np.asarray(noise)[:: self.n_agents]
        message = reparameterize(mu, sigma, rng, sample, step_noise)

        repeat = np.repeat(np.arange(per_step.shape[0]), self.n_agents)
        return SpecializedMessage(
            mu=message.mu[repeat],
            sigma=message.sigma[repeat],
            z=message.z[repeat],
            noise=message.noise[repeat],
        )

    __call__ = forward


class GISModule(Module, MessageSource):
    """Global Information Specialization: per-agent weights for a relu layer over the global state."""

    def __init__(
        self,
        store: ParamStore,
        local_dim: int,
        state_dim: int,
        rng: Rng,
        d_g: int = 32,
        d_z: int = 8,
        hyper_hidden: int = 64,
        sigma_min: float = 0.05,
        prefix: str = "gis",
    ):
        super().__init__(store, prefix)
        self.local_dim = local_dim
        self.state_dim = state_dim
        self.d_g = d_g
        self.d_z = d_z
        self.hyper = Linear(store, f"{prefix}.hyper.fc1", local_dim, hyper_hidden, rng.split(0))
        self.weight_head = Linear(store, f"{prefix}.hyper.w", hyper_hidden, state_dim * d_g, rng.split(1))
        self.bias_head = Linear(store, f"{prefix}.hyper.b", hyper_hidden, d_g, rng.split(2))
        self.generator = DistributionGenerator(store, f"{prefix}.generator", d_g, d_z, sigma_min, rng.split(3))

    def generated_params(self, local: LocalInput) -> Tuple[Tensor, Tensor]:
        """The per-agent state layer of every row: W [N, state_dim, d_g] and B [N, d_g]."""
        hidden = F.relu(self.hyper(local_rows(local)))
        n_rows = hidden.shape[0]
        weights = self.weight_head(hidden).reshape(n_rows, self.state_dim, self.d_g)
        return weights, self.bias_head(hidden)

    def specialize(self, local: LocalInput, state) -> Tensor:
        """g = relu(s W + B) per row."""
        state = as_tensor(state)
        weights, bias = self.generated_params(local)
        if state.shape != (weights.shape[0], self.state_dim):
            raise ShapeError(self.prefix, [state.shape, weights.shape], "state rows must align with local rows")
        projected = F.matmul(state.reshape(state.shape[0], 1, self.state_dim), weights)
        return F.relu(projected.reshape(state.shape[0], self.d_g) + bias)

    def forward(
        self,
        local: LocalInput,
        state,
        rng: Optional[Rng] = None,
        sample: bool = True,
        noise: Optional[np.ndarray] = None,
    ) -> SpecializedMessage:
        mu, sigma = self.generator(self.specialize(local, state))
        return reparameterize(mu, sigma, rng, sample, noise)

    __call__ = forward


def giu_forward(
    module: GIUModule, local: LocalInput, state, rng: Optional[Rng] = None, sample: bool = True
) -> SpecializedMessage:
    return module.forward(local, state, rng=rng, sample=sample)


def gis_forward(
    module: GISModule, local: LocalInfo, state, rng: Optional[Rng] = None, sample: bool = True
) -> SpecializedMessage:
    return module.forward(local, state, rng=rng, sample=sample)
