# Episode batches and the lockstep rollout loop
#
# Arrays are batch-major and padded to the environment's episode limit T:
#   obs [B, T+1, n, obs_dim], state [B, T+1, state_dim]   (index t holds the input of step t)
#   actions [B, T, n], reward/terminated/truncated/mask [B, T], won/lengths [B]
# Step t < length is valid (mask 1); everything after the terminal step is zero padding.

from dataclasses import dataclass, fields, replace
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from ..core.rng import Rng
from ..exceptions import ShapeError
from ..interfaces import LocalInfo, MultiAgentEnv

# act(local, hidden, state_rows) -> (actions [N], new hidden [N, d_h], extras {name: [N, ...]})
ActFn = Callable[[LocalInfo, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray, Dict[str, np.ndarray]]]


@dataclass
class EpisodeBatch:
    obs: np.ndarray
    state: np.ndarray
    actions: np.ndarray
    reward: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    mask: np.ndarray
    won: np.ndarray
    lengths: np.ndarray
    noise: Optional[np.ndarray] = None
    log_probs: Optional[np.ndarray] = None

    def __post_init__(self):
        batch, steps, n_agents = self.actions.shape
        expected = {
            "obs": (batch, steps + 1, n_agents),
            "state": (batch, steps + 1),
            "reward": (batch, steps),
            "terminated": (batch, steps),
            "truncated": (batch, steps),
            "mask": (batch, steps),
            "won": (batch,),
            "lengths": (batch,),
        }
        for name, prefix in expected.items():
            shape = getattr(self, name).shape
            if shape[: len(prefix)] != prefix:
                raise ShapeError("EpisodeBatch", [self.actions.shape, shape], f"{name} does not align")
        if steps > 1 and np.any(np.diff(self.mask, axis=1) > 0):
            raise ValueError("mask must be non-increasing over time")

    @property
    def batch_size(self) -> int:
        return self.actions.shape[0]

    @property
    def max_t(self) -> int:
        return self.actions.shape[1]

    @property
    def n_agents(self) -> int:
        return self.actions.shape[2]

    @property
    def absorbing(self) -> np.ndarray:
        """1 where the episode ended in a terminal state (no bootstrap), 0 for time-limit truncation."""
        return self.terminated * (1.0 - self.truncated)

    @property
    def last_actions(self) -> np.ndarray:
        """[B, T+1, n] previous action per step, -1 at t = 0."""
        first = np.full((self.batch_size, 1, self.n_agents), -1, dtype=np.int64)
        return np.concatenate([first, self.actions.astype(np.int64)], axis=1)

    def select(self, indices) -> "EpisodeBatch":
        """Sub-batch of the given episodes."""
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, **{f.name: _take(getattr(self, f.name), indices) for f in fields(self)})

    def truncate(self, max_t: int) -> "EpisodeBatch":
        """Drop padding beyond ``max_t`` steps."""
        max_t = max(1, min(int(max_t), self.max_t))
        changes = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or f.name in ("won", "lengths"):
                continue
            width = max_t + 1 if f.name in ("obs", "state") else max_t
            changes[f.name] = value[:, :width]
        return replace(self, **changes)

    def episode_returns(self) -> np.ndarray:
        return (self.reward * self.mask).sum(axis=1)


def _take(value: Optional[np.ndarray], indices: np.ndarray) -> Optional[np.ndarray]:
    return None if value is None else value[indices]


def concat_batches(batches: Sequence[EpisodeBatch]) -> EpisodeBatch:
    """Stack batches that share one padded length along the episode axis."""
    merged = {}
    for f in fields(EpisodeBatch):
        values = [getattr(b, f.name) for b in batches]
        merged[f.name] = None if any(v is None for v in values) else np.concatenate(values, axis=0)
    return EpisodeBatch(**merged)


def run_episodes(
    envs: Sequence[MultiAgentEnv],
    reset_rngs: Sequence[Rng],
    act: ActFn,
    hidden: np.ndarray,
    extras: Optional[Dict[str, np.ndarray]] = None,
) -> EpisodeBatch:
    """
    Play one episode in every environment, in lockstep, with a batched policy.

    Rows of every policy call are laid out ``b * n_agents + i``. Finished episodes keep
    occupying their rows (zero inputs) until every episode has ended; their actions are
    discarded and their extras are not recorded.

    Args:
        envs: One environment per episode, all with the same spec
        reset_rngs: One reset stream per environment
        act: Batched policy
        hidden: Initial recurrent state for all B * n rows
        extras: When given, receives every recorded extra as a [B, T, n, ...] array

    Returns:
        The collected episodes
    """
    spec = envs[0].spec
    batch, n, steps = len(envs), spec.n_agents, spec.episode_limit
    obs = np.zeros((batch, steps + 1, n, spec.obs_dim))
    state = np.zeros((batch, steps + 1, spec.state_dim))
    actions = np.zeros((batch, steps, n), dtype=np.int64)
    reward = np.zeros((batch, steps))
    terminated = np.zeros((batch, steps))
    truncated = np.zeros((batch, steps))
    mask = np.zeros((batch, steps))
    won = np.zeros(batch, dtype=bool)
    lengths = np.full(batch, steps, dtype=np.int64)
    extras = {} if extras is None else extras

    for b, (env, rng) in enumerate(zip(envs, reset_rngs)):
        state[b, 0], first_obs = env.reset(rng)
        obs[b, 0] = np.stack(first_obs)

    active = np.ones(batch, dtype=bool)
    last = np.full((batch, n), -1, dtype=np.int64)
    for t in range(steps):
        if not active.any():
            break
        local = LocalInfo.from_step(obs[:, t], last, spec.n_actions)
        state_rows = np.repeat(state[:, t], n, axis=0)
        chosen, hidden, step_extras = act(local, hidden, state_rows)
        chosen = np.asarray(chosen, dtype=np.int64).reshape(batch, n)

        for key, value in step_extras.items():
            value = np.asarray(value).reshape((batch, n) + np.shape(value)[1:])
            buffer = extras.setdefault(key, np.zeros((batch, steps) + value.shape[1:]))
            buffer[active, t] = value[active]

        for b in np.flatnonzero(active):
            result = envs[b].step(chosen[b])
            actions[b, t] = chosen[b]
            reward[b, t] = result.reward
            mask[b, t] = 1.0
            state[b, t + 1] = result.next_state
            obs[b, t + 1] = np.stack(result.next_obs)
            if result.terminated:
                terminated[b, t] = 1.0
                truncated[b, t] = float(result.truncated)
                won[b] = result.won
                lengths[b] = t + 1
                active[b] = False
        last = actions[:, t]

    return EpisodeBatch(
        obs=obs,
        state=state,
        actions=actions,
        reward=reward,
        terminated=terminated,
        truncated=truncated,
        mask=mask,
        won=won,
        lengths=lengths,
        noise=extras.get("noise"),
        log_probs=extras.get("log_probs"),
    )
