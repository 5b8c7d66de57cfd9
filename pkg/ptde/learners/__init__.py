# Stage-1 learners package
# Episode batches, replay, rollout control and the TD / PPO trainers

from .episode import EpisodeBatch, concat_batches, run_episodes
from .buffer import ReplayBuffer
from .controller import MultiAgentController, collect_episodes, unroll
from .q_learner import QLearner, TargetNets, epsilon_at, td_loss, td_targets, train_stage1
from .ac_learner import ACLearner, compute_gae, ppo_surrogate, train_stage1_ac

__all__ = [
    "ACLearner",
    "EpisodeBatch",
    "MultiAgentController",
    "QLearner",
    "ReplayBuffer",
    "TargetNets",
    "collect_episodes",
    "compute_gae",
    "concat_batches",
    "epsilon_at",
    "ppo_surrogate",
    "run_episodes",
    "td_loss",
    "td_targets",
    "train_stage1",
    "train_stage1_ac",
    "unroll",
]
