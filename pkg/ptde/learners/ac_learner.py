# Stage-1 actor-critic learner (PPO-clip with a centralized state-value critic)
#
# The actor is the recurrent agent network fed [h, z]; messages are re-generated during the
# update from the noise recorded at collection time, so the first epoch has ratio 1.

from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from ..config import ExperimentConfig, LearnerConfig
from ..core import functional as F
from ..core.checkpoint import Checkpoint
from ..core.optim import Adam
from ..core.tensor import Tensor, no_grad
from ..exceptions import TrainingDiverged
from ..logging import get_logger, with_logging
from ..nets import Networks, critic_forward
from .controller import unroll
from .episode import EpisodeBatch
from .q_learner import MakeEnv, Stage1Run

logger = get_logger("learners.ac")


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    absorbing: np.ndarray,
    mask: np.ndarray,
    gamma: float,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation over padded episodes.

    Args:
        rewards: [B, T]
        values: [B, T+1] state values, index t for s_t
        absorbing: [B, T] 1 where the step ended in a terminal state (no bootstrap)
        mask: [B, T] valid steps
        gamma: Discount factor
        lam: GAE lambda

    Returns:
        (advantages [B, T], returns [B, T]), both zero at masked steps
    """
    batch, steps = rewards.shape
    advantages = np.zeros((batch, steps))
    running = np.zeros(batch)
    for t in reversed(range(steps)):
        cont = 1.0 - absorbing[:, t]
        delta = rewards[:, t] + gamma * cont * values[:, t + 1] - values[:, t]
        following = mask[:, t + 1] if t + 1 < steps else np.zeros(batch)
        running = delta + gamma * lam * cont * following * running
        advantages[:, t] = running
    advantages *= mask
    returns = (advantages + values[:, :steps]) * mask
    return advantages, returns


def _masked_mean(values: Tensor, mask: np.ndarray) -> Tensor:
    return (values * mask).sum() / max(float(mask.sum()), 1.0)


def ppo_surrogate(
    log_probs: Tensor, old_log_probs: np.ndarray, advantages: np.ndarray, mask: np.ndarray, clip_ratio: float
) -> Tensor:
    """
    Clipped surrogate objective (to be maximized).

    All inputs share one shape; the result is the masked mean of
    min(ratio * A, clip(ratio, 1 - c, 1 + c) * A) with ratio = exp(log_probs - old_log_probs).
    """
    ratio = F.exp(log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = F.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
    return _masked_mean(F.minimum(unclipped, clipped), mask)


class ACLearner:
    """PPO updates of actor, message source and critic on freshly collected episodes."""

    def __init__(self, networks: Networks, config: LearnerConfig, gamma: float):
        if networks.critic is None:
            raise ValueError("ACLearner needs networks built for an actor-critic variant")
        self.networks = networks
        self.config = config
        self.gamma = gamma
        self.optimizer = Adam(networks.store, lr=config.lr, prefixes=networks.prefixes)
        self.updates = 0

    def values(self, batch: EpisodeBatch) -> Tensor:
        """V(s_t) for t = 0..T, batch-major [B, T+1]."""
        flat = batch.state.reshape(batch.batch_size * (batch.max_t + 1), -1)
        return critic_forward(self.networks.critic, flat).reshape(batch.batch_size, batch.max_t + 1)

    def loss(self, batch: EpisodeBatch, advantages: np.ndarray, returns: np.ndarray) -> Tuple[Tensor, Dict[str, float]]:
        steps = batch.max_t
        logits = unroll(self.networks, batch, steps, sample=batch.noise is not None, noise=batch.noise)
        log_pi = F.log_softmax(logits)
        mask = np.swapaxes(batch.mask, 0, 1)[..., None] * np.ones(batch.n_agents)
        chosen = F.gather(log_pi, np.swapaxes(batch.actions, 0, 1))
        old = np.swapaxes(batch.log_probs, 0, 1)
        adv = np.swapaxes(advantages, 0, 1)[..., None] * np.ones(batch.n_agents)

        surrogate = ppo_surrogate(chosen, old, adv, mask, self.config.clip_ratio)
        entropy = _masked_mean(-(F.exp(log_pi) * log_pi).sum(axis=-1), mask)
        value_error = self.values(batch)[:, 0:steps] - returns
        value_loss = _masked_mean(value_error * value_error, batch.mask)
        total = -surrogate + self.config.value_coef * value_loss - self.config.entropy_coef * entropy
        return total, {"surrogate": surrogate.item(), "value_loss": value_loss.item(), "entropy": entropy.item()}

    def train(self, batch: EpisodeBatch) -> Dict[str, float]:
        """
        ``ppo_epochs`` full-batch updates on one set of episodes.

        Raises:
            TrainingDiverged: On a non-finite loss
        """
        if batch.log_probs is None:
            raise ValueError("actor-critic batches must carry the behaviour log-probabilities")
        with no_grad():
            values = self.values(batch).data
        advantages, returns = compute_gae(
            batch.reward, values, batch.absorbing, batch.mask, self.gamma, self.config.gae_lambda
        )
        info: Dict[str, float] = {}
        for _ in range(self.config.ppo_epochs):
            self.optimizer.zero_grad()
            loss, info = self.loss(batch, advantages, returns)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite PPO loss {value} at update {self.updates}")
            loss.backward()
            info["grad_norm"] = self.networks.store.clip_grad_norm(self.config.grad_norm_clip)
            self.optimizer.step()
            self.updates += 1
            info["loss"] = value
        logger.debug("PPO update", {"updates": self.updates, **info})
        return info


@with_logging
def train_stage1_ac(
    config: ExperimentConfig, seed: int, run_dir: Optional[Path] = None, make_env: Optional[MakeEnv] = None
) -> Checkpoint:
    """
    Stage-1 training of an actor-critic variant (ac, ac_ugi, ac_sgi).

    Every iteration collects n_parallel on-policy episodes and runs the PPO epochs on
    them. Metrics rows match the value-based learner; the epsilon column is 0.

    Raises:
        TrainingDiverged: On a non-finite loss, after writing diagnostic.json
    """
    if not config.variant.is_actor_critic:
        raise ValueError(f"{config.variant.value} is not an actor-critic variant; use train_stage1")
    run = Stage1Run(config, seed, run_dir, make_env)
    learner_cfg = config.learner
    learner = ACLearner(run.networks, learner_cfg, run.spec.gamma)

    loss, iteration, next_eval = float("nan"), 0, learner_cfg.eval_interval
    while run.episodes < learner_cfg.total_episodes:
        batch = run.collect(iteration, epsilon=0.0)
        try:
            loss = learner.train(batch)["loss"]
        except TrainingDiverged as e:
            run.diverged(e, {"updates": learner.updates})
            raise
        if run.episodes >= next_eval:
            run.record(loss, 0.0)
            while next_eval <= run.episodes:
                next_eval += learner_cfg.eval_interval
        iteration += 1

    if not run.rows or run.rows[-1]["episodes"] != run.episodes:
        run.record(loss, 0.0)
    return run.finish()
