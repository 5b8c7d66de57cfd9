# Environments package
# Contains the MultiAgentEnv implementations and the SecretSlots value oracles

from ..config import EnvConfig
from ..interfaces import MultiAgentEnv
from .grid_capture import GridCapture
from .secret_slots import SecretSlots, best_blind_value, brute_force_value, uniform_policy_value


def env_factory(config: EnvConfig) -> MultiAgentEnv:
    """
    Build a fresh environment instance from its config section.

    Args:
        config: The ``env`` section of an ExperimentConfig

    Returns:
        A new, not yet reset environment
    """
    if config.name == "grid_capture":
        return GridCapture(
            size=config.grid_size,
            n_agents=config.n_agents,
            episode_limit=config.episode_limit or 30,
            gamma=config.gamma,
        )
    return SecretSlots(
        n_agents=config.n_agents,
        n_actions=config.n_actions,
        noise_dims=config.noise_dims,
        obs_dim=config.obs_dim,
        gamma=config.gamma,
    )


__all__ = [
    "GridCapture",
    "SecretSlots",
    "best_blind_value",
    "brute_force_value",
    "env_factory",
    "uniform_policy_value",
]
