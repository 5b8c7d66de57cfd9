# Greedy evaluation of executors and the performance retention ratio

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import ExperimentConfig
from .core.checkpoint import Checkpoint
from .core.params import ParamStore
from .core.rng import Rng
from .interfaces import CentralizedExecutor, DecentralizedExecutor, EnvSpec, Executor, LocalInfo, MultiAgentEnv
from .learners.controller import MultiAgentController
from .learners.episode import ActFn, run_episodes
from .logging import get_logger
from .nets import Networks, build_networks

logger = get_logger("evaluation")


def restore_networks(checkpoint: Checkpoint, config: ExperimentConfig, spec: EnvSpec) -> Networks:
    """
    Rebuild the stage-1 networks of the config's variant from a checkpoint, frozen.

    Raises:
        CheckpointError: If the checkpoint lacks parameters the variant needs
    """
    store = ParamStore()
    networks = build_networks(spec, config.variant, config.nets, store, Rng(0))
    store.load_state(checkpoint.params, strict=True)
    store.freeze()
    return networks


class TeacherExecutor(CentralizedExecutor):
    """Greedy stage-1 policy; reads the global state through its message source."""

    def __init__(self, networks: Networks, spec: EnvSpec, sample_at_eval: bool = False):
        self.controller = MultiAgentController(networks, spec, sample_at_eval=sample_at_eval)
        self.n_agents = spec.n_agents

    def initial_hidden(self, n_rows: int) -> np.ndarray:
        return self.controller.initial_hidden(n_rows)

    def act(self, local: LocalInfo, hidden: np.ndarray, state: np.ndarray, rng: Optional[Rng] = None):
        actions, hidden, _ = self.controller.select_actions(local, hidden, state, rng, test_mode=True)
        return actions, hidden


class RandomExecutor(DecentralizedExecutor):
    """Uniformly random actions; the chance-level baseline."""

    def __init__(self, spec: EnvSpec, rng: Rng):
        self.n_agents = spec.n_agents
        self.n_actions = spec.n_actions
        self.rng = rng

    def initial_hidden(self, n_rows: int) -> np.ndarray:
        return np.zeros((n_rows, 1))

    def act(self, local: LocalInfo, hidden: np.ndarray):
        return self.rng.integers(0, self.n_actions, size=local.n_rows), hidden


@dataclass
class EvalResult:
    win_rate: float
    mean_return: float
    episodes: int


def _act_fn(executor: Executor, rng: Rng) -> ActFn:
    if isinstance(executor, CentralizedExecutor):

        def act(local, hidden, state_rows):
            actions, hidden = executor.act(local, hidden, state_rows, rng)
            return actions, hidden, {}

    else:

        def act(local, hidden, state_rows):
            actions, hidden = executor.act(local, hidden)
            return actions, hidden, {}

    return act


def evaluate(
    executor: Executor,
    make_env: Callable[[], MultiAgentEnv],
    episodes: int,
    rng: Rng,
    n_parallel: int = 8,
) -> EvalResult:
    """
    Greedy evaluation over fresh episodes.

    Decentralized executors never see the state: their act() is called with local
    information and hidden state only.

    Args:
        executor: Centralized (teacher) or decentralized (student) executor
        make_env: Builds one environment instance
        episodes: Number of evaluation episodes
        rng: Stream for resets; chunk k uses rng.split(k)
        n_parallel: Episodes run in lockstep per chunk

    Returns:
        Win rate (wins / episodes) and mean undiscounted return
    """
    if episodes < 1:
        raise ValueError("evaluation needs at least one episode")
    envs = [make_env() for _ in range(min(n_parallel, episodes))]
    wins, returns, done, chunk = 0, [], 0, 0
    while done < episodes:
        k = min(len(envs), episodes - done)
        chunk_rng = rng.split(chunk)
        batch = run_episodes(
            envs[:k],
            chunk_rng.split(0).splits(k),
            _act_fn(executor, chunk_rng.split(1)),
            executor.initial_hidden(k * executor.n_agents),
        )
        wins += int(batch.won.sum())
        returns.extend(batch.episode_returns().tolist())
        done += k
        chunk += 1

    result = EvalResult(win_rate=wins / episodes, mean_return=float(np.mean(returns)), episodes=episodes)
    logger.debug(
        "Evaluated executor",
        {"executor": type(executor).__name__, "episodes": episodes, "win_rate": result.win_rate},
    )
    return result


def compute_prr(win_decentralized: float, win_centralized: float) -> Optional[float]:
    """
    Performance retention ratio: decentralized win rate over centralized win rate.

    Returns:
        The ratio (may exceed 1), or None when the centralized win rate is zero
    """
    if not (np.isfinite(win_decentralized) and np.isfinite(win_centralized)):
        raise ValueError("win rates must be finite")
    if win_centralized <= 0.0:
        return None
    return win_decentralized / win_centralized
