# Abstract base classes and shared records
# These define the contract between environments, message sources, learners and executors

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .core.rng import Rng
from .core.tensor import Tensor
from .exceptions import ShapeError
from .utils import agent_ids, one_hot


class EnvSpec(BaseModel):
    """Dimensions of a Dec-POMDP instance."""

    model_config = ConfigDict(frozen=True)

    n_agents: int = Field(ge=1)
    n_actions: int = Field(ge=1)
    obs_dim: int = Field(ge=1)
    state_dim: int = Field(ge=1)
    episode_limit: int = Field(ge=1)
    gamma: float = Field(ge=0.0, lt=1.0)

    @property
    def local_dim(self) -> int:
        """Width of a flattened LocalInfo row."""
        return self.obs_dim + self.n_actions + self.n_agents


@dataclass
class StepResult:
    reward: float
    terminated: bool
    won: bool
    next_state: np.ndarray
    next_obs: List[np.ndarray]
    truncated: bool = False

    def __post_init__(self):
        if self.won and not self.terminated:
            raise ValueError("a won step must also terminate the episode")
        if self.truncated and (self.won or not self.terminated):
            raise ValueError("a truncated step terminates the episode without a win")


@dataclass
class LocalInfo:
    """
    Rows of per-agent local information (o_i^t, one-hot u_i^{t-1}, one-hot idx).

    Every array has a leading row axis N; batched callers lay rows out
    episode-major then agent (row = b * n_agents + i).
    """

    obs: np.ndarray
    last_action: np.ndarray
    agent_id: np.ndarray

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float64)
        self.last_action = np.asarray(self.last_action, dtype=np.float64)
        self.agent_id = np.asarray(self.agent_id, dtype=np.float64)
        rows = {self.obs.shape[0], self.last_action.shape[0], self.agent_id.shape[0]}
        if len(rows) != 1 or self.obs.ndim != 2 or self.last_action.ndim != 2 or self.agent_id.ndim != 2:
            raise ShapeError("LocalInfo", [self.obs.shape, self.last_action.shape, self.agent_id.shape])
        action_sums = self.last_action.sum(axis=1)
        if not np.all((action_sums == 0.0) | (action_sums == 1.0)):
            raise ValueError("last_action rows must be one-hot or all zero")
        if not np.all(self.agent_id.sum(axis=1) == 1.0):
            raise ValueError("agent_id rows must be one-hot")

    @classmethod
    def from_step(cls, obs: np.ndarray, last_actions: Optional[np.ndarray], n_actions: int) -> "LocalInfo":
        """
        Build rows from a [B, n, obs_dim] observation block.

        Args:
            obs: Observations for B episodes x n agents
            last_actions: [B, n] previous action indices, -1 (or None) for "none yet"
            n_actions: Size of the action one-hot
        """
        obs = np.asarray(obs, dtype=np.float64)
        batch, n_agents, _ = obs.shape
        if last_actions is None:
            last_actions = np.full((batch, n_agents), -1, dtype=np.int64)
        return cls(
            obs=obs.reshape(batch * n_agents, -1),
            last_action=one_hot(np.asarray(last_actions).reshape(-1), n_actions),
            agent_id=np.tile(agent_ids(n_agents), (batch, 1)),
        )

    @property
    def n_rows(self) -> int:
        return self.obs.shape[0]

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.obs, self.last_action, self.agent_id], axis=1)


@dataclass
class SpecializedMessage:
    """A message distribution N(mu, sigma^2) and its reparameterized sample z = mu + sigma * noise."""

    mu: Tensor
    sigma: Tensor
    z: Tensor
    noise: np.ndarray


class MultiAgentEnv(ABC):
    """A fully cooperative Dec-POMDP with a shared reward and a win flag."""

    @property
    @abstractmethod
    def spec(self) -> EnvSpec:
        """Dimensions of this environment."""
        pass

    @abstractmethod
    def reset(self, rng: Rng) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Start a fresh episode.

        Args:
            rng: Stream consumed by the initial-state draw

        Returns:
            (state, per-agent observations)
        """
        pass

    @abstractmethod
    def step(self, joint_action) -> StepResult:
        """
        Apply one joint action.

        Raises:
            InvalidAction: If any action is outside [0, n_actions)
            EpisodeTerminated: If the episode already ended
        """
        pass

    @property
    def multi_step(self) -> bool:
        return self.spec.episode_limit > 1


class MessageSource(ABC):
    """Produces per-row messages for the agent network during stage 1."""

    prefix: str

    @abstractmethod
    def forward(
        self,
        local: LocalInfo,
        state: np.ndarray,
        rng: Optional[Rng] = None,
        sample: bool = True,
        noise: Optional[np.ndarray] = None,
    ) -> SpecializedMessage:
        """
        Args:
            local: N rows of local information
            state: [N, state_dim] global state aligned with the rows
            rng: Source of the reparameterization noise when sampling
            sample: Draw z; when False, z is the mean
            noise: Pre-drawn standard normal noise, overriding rng

        Returns:
            One message per row
        """
        pass


class Executor(ABC):
    """Greedy action selection for evaluation."""

    n_agents: int

    @abstractmethod
    def initial_hidden(self, n_rows: int) -> np.ndarray:
        pass


class CentralizedExecutor(Executor):
    """Executes with access to the global state (stage-1 policies)."""

    @abstractmethod
    def act(self, local: LocalInfo, hidden: np.ndarray, state: np.ndarray, rng: Optional[Rng] = None):
        """Returns (actions [N], new hidden)."""
        pass


class DecentralizedExecutor(Executor):
    """Executes from local information only."""

    @abstractmethod
    def act(self, local: LocalInfo, hidden: np.ndarray):
        """Returns (actions [N], new hidden)."""
        pass
