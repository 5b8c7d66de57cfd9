# Multi-agent controller: action selection during rollouts and batched unrolls for training

from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..core import functional as F
from ..core.rng import Rng
from ..core.tensor import Tensor, no_grad
from ..interfaces import EnvSpec, LocalInfo, MultiAgentEnv
from ..logging import get_logger
from ..nets import Networks, agent_forward
from .episode import ActFn, EpisodeBatch, run_episodes

logger = get_logger("learners.controller")


class MultiAgentController:
    """
    Drives the agent (or actor) network of one variant for all agents at once.

    Value-based variants act epsilon-greedily on Q-values; actor-critic variants sample
    from the softmax policy. In test mode both act greedily and messages use the mean
    unless ``sample_at_eval`` is set.
    """

    def __init__(self, networks: Networks, spec: EnvSpec, sample_at_eval: bool = False):
        self.networks = networks
        self.spec = spec
        self.sample_at_eval = sample_at_eval

    @property
    def n_agents(self) -> int:
        return self.spec.n_agents

    def initial_hidden(self, n_rows: int) -> np.ndarray:
        return self.networks.agent.initial_hidden(n_rows)

    def forward(
        self,
        local: LocalInfo,
        hidden,
        state_rows: np.ndarray,
        rng: Optional[Rng] = None,
        test_mode: bool = False,
        noise: Optional[np.ndarray] = None,
    ) -> Tuple[Tensor, Tensor, Optional[np.ndarray]]:
        """
        One network step for N rows.

        Returns:
            (Q-values or logits [N, A], new hidden [N, d_h], message noise used or None)
        """
        message, used_noise = None, None
        if self.networks.message is not None:
            sample = self.sample_at_eval or not test_mode
            out = self.networks.message.forward(local, state_rows, rng=rng, sample=sample, noise=noise)
            message, used_noise = out.z, out.noise
        outputs, hidden = agent_forward(self.networks.agent, local, hidden, message)
        return outputs, hidden, used_noise

    def select_actions(
        self,
        local: LocalInfo,
        hidden,
        state_rows: np.ndarray,
        rng: Rng,
        epsilon: float = 0.0,
        test_mode: bool = False,
    ) -> Tuple[np.ndarray, np.ndarray, Dict[str, np.ndarray]]:
        """
        Choose one action per row.

        Returns:
            (actions [N], new hidden [N, d_h], extras) where extras holds the sampled message
            noise and, for actor-critic variants, the log-probability of each chosen action
        """
        with no_grad():
            outputs, new_hidden, noise = self.forward(local, hidden, state_rows, rng=rng, test_mode=test_mode)
        values = outputs.data
        n_rows, n_actions = values.shape
        extras: Dict[str, np.ndarray] = {}
        if noise is not None and not test_mode:
            extras["noise"] = noise

        if self.networks.variant.is_actor_critic:
            log_probs = F.log_softmax(outputs).data
            if test_mode:
                actions = values.argmax(axis=-1)
            else:
                actions = rng.categorical(np.exp(log_probs))
                extras["log_probs"] = np.take_along_axis(log_probs, actions[:, None], axis=-1)[:, 0]
            return actions, new_hidden.data, extras

        greedy = values.argmax(axis=-1)
        if test_mode or epsilon <= 0.0:
            return greedy, new_hidden.data, extras
        explore = rng.random(n_rows) < epsilon
        random_actions = rng.integers(0, n_actions, size=n_rows)
        return np.where(explore, random_actions, greedy), new_hidden.data, extras

    def act_fn(self, rng: Rng, epsilon: float = 0.0, test_mode: bool = False) -> ActFn:
        def act(local, hidden, state_rows):
            return self.select_actions(local, hidden, state_rows, rng, epsilon=epsilon, test_mode=test_mode)

        return act


def collect_episodes(
    controller: MultiAgentController,
    envs: Sequence[MultiAgentEnv],
    epsilon: float,
    rng: Rng,
    test_mode: bool = False,
) -> EpisodeBatch:
    """
    Run one episode per environment with the controller's policy.

    Args:
        controller: Policy to act with
        envs: The parallel environments (their count is the number of episodes)
        epsilon: Exploration rate in [0, 1] for value-based variants
        rng: Stream split into reset streams (key 0) and an action stream (key 1)
        test_mode: Act greedily with mean messages

    Returns:
        One EpisodeBatch holding every episode
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    reset_rngs = rng.split(0).splits(len(envs))
    act = controller.act_fn(rng.split(1), epsilon=epsilon, test_mode=test_mode)
    batch = run_episodes(envs, reset_rngs, act, controller.initial_hidden(len(envs) * controller.n_agents))
    logger.debug(
        "Collected episodes",
        {"episodes": batch.batch_size, "steps": int(batch.lengths.sum()), "epsilon": epsilon},
    )
    return batch


def unroll(
    networks: Networks,
    batch: EpisodeBatch,
    steps: int,
    rng: Optional[Rng] = None,
    sample: bool = True,
    noise: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Differentiable forward pass of the agent network over the first ``steps`` timesteps.

    Args:
        networks: Networks to evaluate (online or target)
        batch: Episodes to replay
        steps: Number of timesteps, at most T + 1
        rng: Noise stream for sampled messages
        sample: Sample messages (training) or use their mean
        noise: Recorded message noise [B, >= steps, n, d_z] replacing fresh draws

    Returns:
        Outputs of shape [steps, B, n, n_actions], time-major
    """
    batch_size, n = batch.batch_size, batch.n_agents
    n_actions = networks.agent.n_actions
    last_actions = batch.last_actions
    hidden = networks.agent.initial_hidden(batch_size * n)
    outputs = []
    for t in range(steps):
        local = LocalInfo.from_step(batch.obs[:, t], last_actions[:, t], n_actions)
        message = None
        if networks.message is not None:
            state_rows = np.repeat(batch.state[:, t], n, axis=0)
            step_noise = None if noise is None else noise[:, t].reshape(batch_size * n, -1)
            message = networks.message.forward(local, state_rows, rng=rng, sample=sample, noise=step_noise).z
        q, hidden = agent_forward(networks.agent, local, hidden, message)
        outputs.append(q)
    return F.stack(outputs, axis=0).reshape(steps, batch_size, n, n_actions)
