# Networks package
# Agent/actor, message sources, mixers, critic and student, plus the variant-driven builder

from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union

from ..config import NetConfig, Variant
from ..core.params import ParamStore
from ..core.rng import Rng
from ..interfaces import EnvSpec, MessageSource
from .agent import AgentNetwork, actor_forward, agent_forward, local_rows
from .critic import Critic, critic_forward
from .layers import MLP, GRUCell, Linear, Module
from .messages import GISModule, GIUModule, gis_forward, giu_forward, reparameterize
from .mixers import QMixer, VDNMixer, qmix_mix, vdn_mix
from .student import StudentNetwork, student_forward

Mixer = Union[VDNMixer, QMixer]


@dataclass
class Networks:
    """Every stage-1 component of one variant, all reading from one ParamStore."""

    variant: Variant
    store: ParamStore
    agent: AgentNetwork
    message: Optional[MessageSource] = None
    mixer: Optional[Mixer] = None
    critic: Optional[Critic] = None

    @property
    def prefixes(self) -> Tuple[str, ...]:
        """Parameter prefixes trained in stage 1 (each ends with a dot)."""
        parts = [self.agent.prefix]
        if self.message is not None:
            parts.append(self.message.prefix)
        if isinstance(self.mixer, QMixer):
            parts.append(self.mixer.prefix)
        if self.critic is not None:
            parts.append(self.critic.prefix)
        return tuple(f"{p}." for p in parts)

    def bind(self, store: ParamStore) -> "Networks":
        """The same architecture reading parameters from another store (e.g. target networks)."""
        return replace(
            self,
            store=store,
            agent=self.agent.bind(store),
            message=None if self.message is None else self.message.bind(store),
            mixer=None if self.mixer is None else self.mixer.bind(store),
            critic=None if self.critic is None else self.critic.bind(store),
        )


def build_networks(spec: EnvSpec, variant: Variant, nets: NetConfig, store: ParamStore, rng: Rng) -> Networks:
    """
    Register the variant's stage-1 networks in ``store``.

    Args:
        spec: Dimensions of the environment
        variant: Which mixer/learner family and message source to build
        nets: Network widths
        store: Parameter store to register into
        rng: Initialization stream; each component uses its own child stream

    Returns:
        The assembled Networks
    """
    message: Optional[MessageSource] = None
    if variant.message == "gis":
        message = GISModule(
            store,
            spec.local_dim,
            spec.state_dim,
            rng.split(1),
            d_g=nets.d_g,
            d_z=nets.d_z,
            hyper_hidden=nets.hyper_hidden,
            sigma_min=nets.sigma_min,
        )
    elif variant.message == "giu":
        message = GIUModule(
            store, spec.state_dim, spec.n_agents, rng.split(1), d_g=nets.d_g, d_z=nets.d_z, sigma_min=nets.sigma_min
        )

    d_z = 0 if message is None else nets.d_z
    agent_prefix = "actor" if variant.is_actor_critic else "agent"
    agent = AgentNetwork(store, agent_prefix, spec.local_dim, spec.n_actions, rng.split(0), d_h=nets.d_h, d_z=d_z)

    mixer: Optional[Mixer] = None
    critic: Optional[Critic] = None
    if variant.family == "qmix":
        mixer = QMixer(store, spec.n_agents, spec.state_dim, rng.split(2), embed=nets.mix_embed)
    elif variant.family == "vdn":
        mixer = VDNMixer(spec.n_agents)
    else:
        critic = Critic(store, spec.state_dim, rng.split(3), hidden=nets.critic_hidden)

    return Networks(variant=variant, store=store, agent=agent, message=message, mixer=mixer, critic=critic)


def build_student(spec: EnvSpec, nets: NetConfig, store: ParamStore, rng: Rng) -> StudentNetwork:
    return StudentNetwork(store, spec.local_dim, nets.d_z, rng, hidden=nets.student_hidden)


__all__ = [
    "MLP",
    "AgentNetwork",
    "Critic",
    "GISModule",
    "GIUModule",
    "GRUCell",
    "Linear",
    "Mixer",
    "Module",
    "Networks",
    "QMixer",
    "StudentNetwork",
    "VDNMixer",
    "actor_forward",
    "agent_forward",
    "build_networks",
    "build_student",
    "critic_forward",
    "gis_forward",
    "giu_forward",
    "local_rows",
    "qmix_mix",
    "reparameterize",
    "student_forward",
    "vdn_mix",
]
