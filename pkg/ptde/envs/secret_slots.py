# SecretSlots: single-step game where only the global state reveals each agent's goal
#
# State = n one-hot goal vectors (n * A dims) followed by `noise_dims` uniform noise values.
# Observations are all-zero vectors. Reward is the fraction of agents that pick their own
# goal; the episode is won iff every agent is correct.

import itertools
from typing import List, Optional, Tuple

import numpy as np

from ..core.rng import Rng
from ..exceptions import EnvError, EpisodeTerminated, InvalidAction
from ..interfaces import EnvSpec, MultiAgentEnv, StepResult
from ..utils import one_hot


class SecretSlots(MultiAgentEnv):
    def __init__(
        self,
        n_agents: int = 3,
        n_actions: int = 5,
        noise_dims: int = 10,
        obs_dim: int = 4,
        gamma: float = 0.99,
    ):
        self._spec = EnvSpec(
            n_agents=n_agents,
            n_actions=n_actions,
            obs_dim=obs_dim,
            state_dim=n_agents * n_actions + noise_dims,
            episode_limit=1,
            gamma=gamma,
        )
        self.noise_dims = noise_dims
        self.goals: Optional[np.ndarray] = None
        self._state: Optional[np.ndarray] = None
        self._done = True

    @property
    def spec(self) -> EnvSpec:
        return self._spec

    def reset(self, rng: Rng) -> Tuple[np.ndarray, List[np.ndarray]]:
        spec = self._spec
        self.goals = np.asarray(rng.integers(0, spec.n_actions, size=spec.n_agents), dtype=np.int64)
        noise = rng.uniform(0.0, 1.0, size=self.noise_dims)
        self._state = np.concatenate([one_hot(self.goals, spec.n_actions).reshape(-1), noise])
        self._done = False
        return self._state.copy(), self._observations()

    def _observations(self) -> List[np.ndarray]:
        return [np.zeros(self._spec.obs_dim) for _ in range(self._spec.n_agents)]

    def _validate(self, joint_action) -> np.ndarray:
        actions = np.asarray(joint_action, dtype=np.int64).reshape(-1)
        if actions.shape[0] != self._spec.n_agents:
            raise InvalidAction(f"expected {self._spec.n_agents} actions, got {actions.shape[0]}")
        if np.any(actions < 0) or np.any(actions >= self._spec.n_actions):
            raise InvalidAction(f"actions {actions.tolist()} outside [0, {self._spec.n_actions})")
        return actions

    def reward_for(self, joint_action) -> float:
        """Fraction of agents choosing their own goal under the realized state."""
        actions = np.asarray(joint_action, dtype=np.int64).reshape(-1)
        return float(np.mean(actions == self.goals))

    def step(self, joint_action) -> StepResult:
        if self._done:
            raise EpisodeTerminated("step() after the episode terminated; call reset()")
        actions = self._validate(joint_action)
        reward = self.reward_for(actions)
        self._done = True
        return StepResult(
            reward=reward,
            terminated=True,
            won=bool(reward == 1.0),
            next_state=self._state.copy(),
            next_obs=self._observations(),
        )


### Oracles ###


def _require_single_step(env: MultiAgentEnv) -> SecretSlots:
    if not isinstance(env, SecretSlots) or env.multi_step:
        raise EnvError("exact value oracles only apply to single-step SecretSlots instances")
    return env


def _joint_actions(env: SecretSlots):
    return itertools.product(range(env.spec.n_actions), repeat=env.spec.n_agents)


def brute_force_value(env: MultiAgentEnv) -> float:
    """Best achievable reward against the realized goals, by enumerating every joint action."""
    env = _require_single_step(env)
    if env.goals is None:
        raise EnvError("reset() the environment before asking for its value")
    return max(env.reward_for(u) for u in _joint_actions(env))


def uniform_policy_value(env: MultiAgentEnv) -> float:
    """Exact expected reward of the uniform joint policy against the realized goals."""
    env = _require_single_step(env)
    if env.goals is None:
        raise EnvError("reset() the environment before asking for its value")
    rewards = [env.reward_for(u) for u in _joint_actions(env)]
    return float(np.mean(rewards))


def best_blind_value(env: MultiAgentEnv) -> float:
    """Best state-independent joint action, averaged over all equally likely goal draws."""
    env = _require_single_step(env)
    n, a = env.spec.n_agents, env.spec.n_actions
    goal_draws = np.array(list(itertools.product(range(a), repeat=n)))
    best = 0.0
    for u in _joint_actions(env):
        best = max(best, float(np.mean(goal_draws == np.asarray(u))))
    return best
