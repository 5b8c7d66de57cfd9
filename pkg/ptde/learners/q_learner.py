# Stage-1 value-decomposition learner (QMIX / VDN with optional GIU or GIS messages)
#
# Agent network, message source and mixer are trained end to end on the TD loss
#   L = sum_valid (y_tot - Q_tot(tau, u, s))^2 / max(#valid, 1)
#   y_tot = r + gamma * (1 - absorbing) * Q_tot^-(tau', argmax_u' Q_i^-(tau', u'), s')
# The inner max is taken per agent and then mixed, which equals the joint max for monotone mixers.

from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import orjson
import pandas as pd

from .. import evaluation
from ..config import ExperimentConfig, LearnerConfig, config_hash
from ..core import functional as F
from ..core.checkpoint import Checkpoint
from ..core.optim import Adam
from ..core.params import ParamStore
from ..core.rng import Rng
from ..core.tensor import Tensor, no_grad
from ..envs import env_factory
from ..exceptions import TrainingDiverged
from ..interfaces import EnvSpec, MultiAgentEnv
from ..logging import get_logger, with_logging
from ..nets import Networks, QMixer, build_networks, qmix_mix
from ..utils import write_table
from .buffer import ReplayBuffer
from .controller import MultiAgentController, collect_episodes, unroll
from .episode import EpisodeBatch

logger = get_logger("learners.q")

METRICS_COLUMNS = ["step", "episodes", "loss", "eval_win_rate", "eval_return", "epsilon"]

MakeEnv = Callable[[], MultiAgentEnv]

# Child stream keys of a run's master Rng
INIT_STREAM, COLLECT_STREAM, SAMPLE_STREAM, TRAIN_STREAM, EVAL_STREAM = range(5)


class TargetNets:
    """Frozen copies of every stage-1 parameter, refreshed by bitwise copy."""

    def __init__(self, networks: Networks):
        self.store = ParamStore()
        for name, tensor in networks.store.items():
            if name.startswith(networks.prefixes):
                self.store.add(name, tensor.data.copy(), requires_grad=False)
        self.networks = networks.bind(self.store)

    def refresh(self, networks: Networks) -> None:
        self.store.copy_from(networks.store)


def mix(networks: Networks, q_chosen, state) -> Tensor:
    """Q_tot for rows of chosen per-agent values [M, n] and states [M, state_dim]."""
    if isinstance(networks.mixer, QMixer):
        return qmix_mix(networks.mixer, q_chosen, state)
    return networks.mixer(q_chosen)


def _time_major(array: np.ndarray) -> np.ndarray:
    return np.swapaxes(array, 0, 1)


def td_targets(
    batch: EpisodeBatch, target: TargetNets, gamma: float, rng: Optional[Rng] = None, sample: bool = True
) -> np.ndarray:
    """
    Bootstrapped targets y_tot [B, T]; zero at masked steps.

    Args:
        batch: Complete episodes
        target: Target networks
        gamma: Discount factor
        rng: Noise stream for the target's sampled messages
        sample: Sample target messages (training) or use their mean
    """
    steps, n = batch.max_t, batch.n_agents
    with no_grad():
        q_next = unroll(target.networks, batch, steps + 1, rng=rng, sample=sample).data[1:]
    best = q_next.max(axis=-1)
    next_state = _time_major(batch.state[:, 1:])
    with no_grad():
        mixed = mix(target.networks, best.reshape(-1, n), next_state.reshape(steps * batch.batch_size, -1)).data
    mixed = _time_major(mixed.reshape(steps, batch.batch_size))
    return (batch.reward + gamma * (1.0 - batch.absorbing) * mixed) * batch.mask


def chosen_q_tot(networks: Networks, batch: EpisodeBatch, rng: Optional[Rng] = None, sample: bool = True) -> Tensor:
    """Q_tot(tau_t, u_t, s_t) for every step, time-major [T, B]."""
    steps, n = batch.max_t, batch.n_agents
    q = unroll(networks, batch, steps, rng=rng, sample=sample)
    chosen = F.gather(q, _time_major(batch.actions))
    state = _time_major(batch.state[:, :steps]).reshape(steps * batch.batch_size, -1)
    return mix(networks, chosen.reshape(steps * batch.batch_size, n), state).reshape(steps, batch.batch_size)


def td_loss(networks: Networks, batch: EpisodeBatch, targets: np.ndarray, rng: Optional[Rng] = None) -> Tensor:
    """
    Masked mean squared TD error.

    Args:
        networks: Online networks (gradients reach agent, message source and mixer)
        batch: Episodes the targets were computed for
        targets: y_tot [B, T] from ``td_targets``
        rng: Noise stream for the online sampled messages
    """
    q_tot = chosen_q_tot(networks, batch, rng=rng)
    mask = _time_major(batch.mask)
    diff = q_tot - _time_major(targets)
    return (diff * diff * mask).sum() / max(float(mask.sum()), 1.0)


class QLearner:
    """Optimizer, target networks and the TD update for one set of stage-1 networks."""

    def __init__(self, networks: Networks, config: LearnerConfig, gamma: float):
        self.networks = networks
        self.config = config
        self.gamma = gamma
        self.target = TargetNets(networks)
        self.optimizer = Adam(networks.store, lr=config.lr, prefixes=networks.prefixes)
        self.updates = 0

    def refresh_targets(self) -> None:
        self.target.refresh(self.networks)
        logger.debug("Refreshed target networks", {"updates": self.updates})

    def train(self, batch: EpisodeBatch, rng: Rng) -> Dict[str, float]:
        """
        One optimizer step on a minibatch.

        Raises:
            TrainingDiverged: If the loss is not finite (parameters are left untouched)
        """
        targets = td_targets(batch, self.target, self.gamma, rng=rng.split(0))
        self.optimizer.zero_grad()
        loss = td_loss(self.networks, batch, targets, rng=rng.split(1))
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(f"non-finite TD loss {value} at update {self.updates}")
        loss.backward()
        grad_norm = self.networks.store.clip_grad_norm(self.config.grad_norm_clip)
        self.optimizer.step()
        self.updates += 1
        return {"loss": value, "grad_norm": grad_norm}


def epsilon_at(config: LearnerConfig, env_steps: int) -> float:
    """Linear annealing from epsilon_start to epsilon_finish over epsilon_anneal_steps."""
    fraction = min(env_steps / config.epsilon_anneal_steps, 1.0)
    return config.epsilon_start + fraction * (config.epsilon_finish - config.epsilon_start)


def write_diagnostic(path: Path, networks: Networks, info: Dict) -> None:
    """Dump the state of a diverged run for inspection."""
    norms = {
        name: float(np.linalg.norm(t.data)) if np.all(np.isfinite(t.data)) else None
        for name, t in networks.store.items()
    }
    payload = {**info, "param_norms": norms}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))


class Stage1Run:
    """Bookkeeping shared by the stage-1 training loops."""

    def __init__(
        self, config: ExperimentConfig, seed: int, run_dir: Optional[Path] = None, make_env: Optional[MakeEnv] = None
    ):
        self.config = config
        self.seed = seed
        self.run_dir = None if run_dir is None else Path(run_dir)
        self.make_env = make_env or (lambda: env_factory(config.env))
        self.rng = Rng(seed)
        self.spec: EnvSpec = self.make_env().spec
        self.store = ParamStore()
        self.networks = build_networks(self.spec, config.variant, config.nets, self.store, self.rng.split(INIT_STREAM))
        self.controller = MultiAgentController(self.networks, self.spec, sample_at_eval=config.nets.sample_at_eval)
        self.envs = [self.make_env() for _ in range(config.learner.n_parallel)]
        self.rows: List[Dict] = []
        self.episodes = 0
        self.env_steps = 0
        self.log = logger.bind(variant=config.variant.value, seed=seed)

    def collect(self, iteration: int, epsilon: float) -> EpisodeBatch:
        rng = self.rng.split(COLLECT_STREAM).split(iteration)
        batch = collect_episodes(self.controller, self.envs, epsilon, rng)
        self.episodes += batch.batch_size
        self.env_steps += int(batch.lengths.sum())
        return batch

    def evaluate(self, index: int) -> "evaluation.EvalResult":
        executor = evaluation.TeacherExecutor(self.networks, self.spec, sample_at_eval=self.config.nets.sample_at_eval)
        return evaluation.evaluate(
            executor,
            self.make_env,
            self.config.learner.eval_episodes,
            self.rng.split(EVAL_STREAM).split(index),
            n_parallel=self.config.learner.n_parallel,
        )

    def record(self, loss: float, epsilon: float) -> None:
        result = self.evaluate(len(self.rows))
        row = {
            "step": self.env_steps,
            "episodes": self.episodes,
            "loss": loss,
            "eval_win_rate": result.win_rate,
            "eval_return": result.mean_return,
            "epsilon": epsilon,
        }
        self.rows.append(row)
        self.log.info("Evaluation", row)

    def diverged(self, error: TrainingDiverged, info: Dict) -> None:
        if self.run_dir is not None:
            path = self.run_dir / "diagnostic.json"
            state = {"error": str(error), "episodes": self.episodes, "step": self.env_steps, **info}
            write_diagnostic(path, self.networks, state)
            self.log.error("Training diverged", {"diagnostic": str(path)})

    def finish(self) -> Checkpoint:
        digest = config_hash(self.config)
        if self.run_dir is not None:
            write_table(self.run_dir / "metrics.csv", pd.DataFrame(self.rows, columns=METRICS_COLUMNS), digest)
        return Checkpoint.from_store(self.store, self.networks.prefixes, config_hash=digest)


@with_logging
def train_stage1(
    config: ExperimentConfig, seed: int, run_dir: Optional[Path] = None, make_env: Optional[MakeEnv] = None
) -> Checkpoint:
    """
    Stage-1 training of a value-decomposition variant.

    Loop: collect n_parallel episodes -> store -> sample a minibatch -> TD update ->
    refresh targets every ``target_update_interval`` episodes; one metrics row per
    ``eval_interval`` episodes and one at the end.

    Args:
        config: Experiment configuration (variant must be qmix* or vdn*)
        seed: Master seed of the run
        run_dir: Where metrics.csv (and diagnostic.json on divergence) are written
        make_env: Environment builder, defaults to the config's environment

    Returns:
        Checkpoint with the agent, message source and mixer parameters

    Raises:
        TrainingDiverged: On a non-finite loss, after writing diagnostic.json
    """
    if config.variant.is_actor_critic:
        raise ValueError(f"{config.variant.value} is an actor-critic variant; use train_stage1_ac")
    run = Stage1Run(config, seed, run_dir, make_env)
    learner_cfg = config.learner
    learner = QLearner(run.networks, learner_cfg, run.spec.gamma)
    buffer = ReplayBuffer(learner_cfg.buffer_size)
    sample_rng = run.rng.split(SAMPLE_STREAM)
    train_rng = run.rng.split(TRAIN_STREAM)

    loss, epsilon, iteration = float("nan"), epsilon_at(learner_cfg, 0), 0
    last_target, next_eval = 0, learner_cfg.eval_interval
    while run.episodes < learner_cfg.total_episodes:
        epsilon = epsilon_at(learner_cfg, run.env_steps)
        buffer.insert(run.collect(iteration, epsilon))

        if buffer.can_sample(learner_cfg.batch_size):
            batch = buffer.sample(learner_cfg.batch_size, sample_rng)
            try:
                info = learner.train(batch, train_rng.split(learner.updates))
            except TrainingDiverged as e:
                run.diverged(e, {"updates": learner.updates, "epsilon": epsilon})
                raise
            loss = info["loss"]

        if run.episodes - last_target >= learner_cfg.target_update_interval:
            learner.refresh_targets()
            last_target = run.episodes
        if run.episodes >= next_eval:
            run.record(loss, epsilon)
            while next_eval <= run.episodes:
                next_eval += learner_cfg.eval_interval
        iteration += 1

    if not run.rows or run.rows[-1]["episodes"] != run.episodes:
        run.record(loss, epsilon)
    return run.finish()
