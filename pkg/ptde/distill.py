# Stage 2: offline distillation of agent-specific global knowledge into a local-only student
#
# Dataset file layout (little-endian):
#   magic       8 bytes  b"PTDEDSET"
#   version     uint32   DATASET_VERSION
#   counts      uint64 x 2   samples, episodes
#   dims        uint64 x 5   obs_dim, n_actions, n_agents, state_dim, d_z
#   hash_len    uint64, then hash_len bytes of UTF-8 config hash
#   records     samples x (3 + local_dim + state_dim + d_z) float64:
#               episode, step, agent, LocalInfo row, state, teacher mean
# Records are ordered by episode, then step, then agent.

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .config import DistillConfig, ExperimentConfig
from .core import functional as F
from .core.checkpoint import Checkpoint
from .core.optim import Adam, optimizer_step
from .core.params import ParamStore
from .core.rng import Rng
from .core.tensor import no_grad
from .envs import env_factory
from .evaluation import restore_networks
from .exceptions import CheckpointError, DatasetError, PrerequisiteError, TrainingDiverged
from .interfaces import DecentralizedExecutor, EnvSpec, LocalInfo, MultiAgentEnv
from .learners.episode import run_episodes
from .logging import get_logger, with_logging
from .nets import AgentNetwork, Networks, StudentNetwork, agent_forward, build_student, student_forward

logger = get_logger("distill")

DATASET_MAGIC = b"PTDEDSET"
DATASET_VERSION = 1
_HEADER = struct.Struct("<8sIQQQQQQQQ")

DISTILL_COLUMNS = ["epoch", "train_mse", "heldout_mse"]


@dataclass
class DistillSample:
    local: LocalInfo
    state: np.ndarray
    z_target: np.ndarray


@dataclass
class DistillDataset:
    """Flat teacher dataset; row k is agent ``agent[k]`` at step ``step[k]`` of episode ``episode[k]``."""

    local: np.ndarray
    state: np.ndarray
    z_target: np.ndarray
    episode: np.ndarray
    step: np.ndarray
    agent: np.ndarray
    obs_dim: int
    n_actions: int
    n_agents: int
    n_episodes: int
    config_hash: str = ""

    def __post_init__(self):
        columns = (self.local, self.state, self.z_target, self.episode, self.step, self.agent)
        if len({len(c) for c in columns}) != 1:
            raise DatasetError("dataset columns have different lengths")
        if self.local.ndim != 2 or self.local.shape[1] != self.obs_dim + self.n_actions + self.n_agents:
            raise DatasetError(f"local rows must be [S, {self.obs_dim + self.n_actions + self.n_agents}]")
        if not np.all(np.isfinite(self.z_target)):
            raise DatasetError("teacher targets must be finite")

    def __len__(self) -> int:
        return len(self.local)

    @property
    def d_z(self) -> int:
        return self.z_target.shape[1]

    @property
    def state_dim(self) -> int:
        return self.state.shape[1]

    def local_info(self, indices) -> LocalInfo:
        rows = self.local[indices]
        a, b = self.obs_dim, self.obs_dim + self.n_actions
        return LocalInfo(obs=rows[:, :a], last_action=rows[:, a:b], agent_id=rows[:, b:])

    def sample(self, index: int) -> DistillSample:
        return DistillSample(
            local=self.local_info([index]),
            state=self.state[index].copy(),
            z_target=self.z_target[index].copy(),
        )

    def split(self, holdout_fraction: float, rng: Rng) -> Tuple[np.ndarray, np.ndarray]:
        """Seeded sample-level split into (train, held-out) indices, each non-empty."""
        if len(self) < 2:
            raise DatasetError("a train/held-out split needs at least two samples")
        order = np.asarray(rng.permutation(len(self)), dtype=np.int64)
        n_held = min(max(1, int(round(holdout_fraction * len(self)))), len(self) - 1)
        return order[n_held:], order[:n_held]


### File format ###


def encode_dataset(dataset: DistillDataset) -> bytes:
    encoded_hash = dataset.config_hash.encode("utf-8")
    header = _HEADER.pack(
        DATASET_MAGIC,
        DATASET_VERSION,
        len(dataset),
        dataset.n_episodes,
        dataset.obs_dim,
        dataset.n_actions,
        dataset.n_agents,
        dataset.state_dim,
        dataset.d_z,
        len(encoded_hash),
    )
    ids = np.stack([dataset.episode, dataset.step, dataset.agent], axis=1).astype(np.float64)
    records = np.concatenate([ids, dataset.local, dataset.state, dataset.z_target], axis=1)
    return header + encoded_hash + records.astype("<f8").tobytes()


def decode_dataset(data: bytes) -> DistillDataset:
    """
    Raises:
        DatasetError: On a bad magic/version or a size that does not match the header
    """
    if len(data) < _HEADER.size:
        raise DatasetError("dataset file is truncated (no header)")
    header = _HEADER.unpack_from(data)
    magic, version, samples, episodes, obs_dim, n_actions, n_agents, state_dim, d_z, hash_len = header
    if magic != DATASET_MAGIC:
        raise DatasetError("not a dataset file (bad magic)")
    if version != DATASET_VERSION:
        raise DatasetError(f"unsupported dataset version {version}")
    offset = _HEADER.size + hash_len
    local_dim = obs_dim + n_actions + n_agents
    width = 3 + local_dim + state_dim + d_z
    if len(data) != offset + samples * width * 8:
        raise DatasetError(f"dataset size {len(data)} does not match its header")
    config_hash = data[_HEADER.size : offset].decode("utf-8")
    records = np.frombuffer(data, dtype="<f8", offset=offset).reshape(samples, width).astype(np.float64)
    cut = np.cumsum([3, local_dim, state_dim])
    ids, local, state, z_target = np.split(records, cut, axis=1)
    return DistillDataset(
        local=local,
        state=state,
        z_target=z_target,
        episode=ids[:, 0].astype(np.int64),
        step=ids[:, 1].astype(np.int64),
        agent=ids[:, 2].astype(np.int64),
        obs_dim=obs_dim,
        n_actions=n_actions,
        n_agents=n_agents,
        n_episodes=episodes,
        config_hash=config_hash,
    )


def save_dataset(path: str | Path, dataset: DistillDataset) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(dataset))
    logger.info("Wrote distillation dataset", {"path": str(path), "samples": len(dataset)})


def load_dataset(path: str | Path, expected_hash: Optional[str] = None) -> DistillDataset:
    """
    Read a dataset file.

    Args:
        path: File written by ``save_dataset``
        expected_hash: Config hash the dataset must carry

    Raises:
        DatasetError: If the file is missing, malformed or was produced under another config
    """
    try:
        dataset = decode_dataset(Path(path).read_bytes())
    except FileNotFoundError:
        raise DatasetError(f"dataset file not found: {path}") from None
    if expected_hash is not None and dataset.config_hash != expected_hash:
        raise DatasetError(
            f"dataset {path} was generated under config {dataset.config_hash[:12]}, expected {expected_hash[:12]}"
        )
    return dataset


### Generation ###


def load_teacher(checkpoint: Checkpoint, config: ExperimentConfig, spec: EnvSpec) -> Networks:
    """
    Rebuild the stage-1 networks from a checkpoint, frozen.

    Raises:
        PrerequisiteError: If the variant has no GIS message source
        CheckpointError: If the checkpoint lacks the agent or GIS parameters
    """
    if not config.variant.distillable:
        raise PrerequisiteError(f"variant {config.variant.value} has no GIS teacher to distill")
    agent_prefix = "actor" if config.variant.is_actor_critic else "agent"
    checkpoint.require(f"{agent_prefix}.", "gis.")
    return restore_networks(checkpoint, config, spec)


@with_logging
def generate_dataset(
    checkpoint: Checkpoint,
    config: ExperimentConfig,
    episodes: int,
    rng: Rng,
    make_env: Optional[Callable[[], MultiAgentEnv]] = None,
) -> DistillDataset:
    """
    Record teacher knowledge from greedy rollouts.

    Each step of each episode contributes one sample per agent: the LocalInfo row, the
    state and the teacher's message mean.

    Args:
        checkpoint: Stage-1 checkpoint of a GIS variant
        config: Experiment configuration the checkpoint was trained under
        episodes: Number of greedy episodes
        rng: Stream for environment resets; chunk k uses rng.split(k)
        make_env: Environment builder, defaults to the config's environment
    """
    make_env = make_env or (lambda: env_factory(config.env))
    spec = make_env().spec
    teacher = load_teacher(checkpoint, config, spec)
    actor_critic = config.variant.is_actor_critic

    def act(local, hidden, state_rows):
        with no_grad():
            message = teacher.message.forward(local, state_rows, sample=False)
            outputs, hidden = agent_forward(teacher.agent, local, hidden, message.mu)
        actions = outputs.data.argmax(axis=-1)
        return actions, hidden.data, {"local": local.as_array(), "state": state_rows, "mu": message.mu.data}

    envs = [make_env() for _ in range(min(config.learner.n_parallel, episodes))]
    columns: Dict[str, List[np.ndarray]] = {"local": [], "state": [], "mu": [], "episode": [], "step": [], "agent": []}
    done, chunk = 0, 0
    while done < episodes:
        k = min(len(envs), episodes - done)
        chunk_rng = rng.split(chunk)
        extras: Dict[str, np.ndarray] = {}
        batch = run_episodes(
            envs[:k], chunk_rng.split(0).splits(k), act, teacher.agent.initial_hidden(k * spec.n_agents), extras=extras
        )
        # boolean indexing walks (episode, step) row-major; agents stay in order within a step
        valid = batch.mask.astype(bool)
        episode_ids, steps = np.nonzero(valid)
        for key in ("local", "state", "mu"):
            picked = extras[key][valid]
            columns[key].append(picked.reshape(-1, picked.shape[-1]))
        columns["episode"].append(np.repeat(done + episode_ids, spec.n_agents))
        columns["step"].append(np.repeat(steps, spec.n_agents))
        columns["agent"].append(np.tile(np.arange(spec.n_agents), len(steps)))
        done += k
        chunk += 1

    dataset = DistillDataset(
        local=np.concatenate(columns["local"]),
        state=np.concatenate(columns["state"]),
        z_target=np.concatenate(columns["mu"]),
        episode=np.concatenate(columns["episode"]).astype(np.int64),
        step=np.concatenate(columns["step"]).astype(np.int64),
        agent=np.concatenate(columns["agent"]).astype(np.int64),
        obs_dim=spec.obs_dim,
        n_actions=spec.n_actions,
        n_agents=spec.n_agents,
        n_episodes=episodes,
        config_hash=checkpoint.config_hash,
    )
    logger.info(
        "Generated distillation dataset",
        {"episodes": episodes, "samples": len(dataset), "actor_critic": actor_critic},
    )
    return dataset


### Student training ###


@dataclass
class DistillResult:
    """Best student parameters (by held-out MSE) and the learning curve that found them."""

    params: Dict[str, np.ndarray]
    history: pd.DataFrame
    initial_heldout_mse: float
    heldout_mse: float
    epochs_run: int

    def checkpoint(self, config_hash: str = "") -> Checkpoint:
        return Checkpoint({name: value.copy() for name, value in self.params.items()}, config_hash)


def _mse(student: StudentNetwork, dataset: DistillDataset, indices: np.ndarray) -> float:
    with no_grad():
        return F.mse(student_forward(student, dataset.local[indices]), dataset.z_target[indices]).item()


@with_logging
def train_student(dataset: DistillDataset, config: DistillConfig, rng: Rng, hidden: int = 64) -> DistillResult:
    """
    Fit a local-only student to the teacher means by minibatch MSE.

    Works from the dataset alone; no environment is touched. One epoch is one
    minibatch Adam step. The held-out split is evaluated every ``eval_every`` epochs
    and after the last one; training stops after ``patience`` evaluations without
    improvement and the best parameters seen (initialization included) are returned.

    Args:
        dataset: Teacher dataset from ``generate_dataset``
        config: Distillation hyperparameters
        rng: Student stream; child 0 initializes, 1 splits, 2 draws minibatches
        hidden: Student hidden width

    Returns:
        DistillResult whose history has one row per evaluation, epoch 0 being the initialization

    Raises:
        DatasetError: If the dataset cannot be split into train and held-out samples
        TrainingDiverged: On a non-finite minibatch loss
    """
    store = ParamStore()
    student = StudentNetwork(store, dataset.local.shape[1], dataset.d_z, rng.split(0), hidden=hidden)
    train_idx, held_idx = dataset.split(config.holdout_fraction, rng.split(1))
    batch_rng = rng.split(2)
    optimizer = Adam(store, lr=config.lr, prefixes=(f"{student.prefix}.",))
    batch_size = min(config.batch_size, len(train_idx))

    initial = _mse(student, dataset, held_idx)
    rows = [{"epoch": 0, "train_mse": _mse(student, dataset, train_idx), "heldout_mse": initial}]
    best, best_params, stale, epochs_run = initial, store.state_dict(), 0, 0

    for epoch in range(1, config.epochs + 1):
        batch = batch_rng.choice(train_idx, size=batch_size, replace=False)
        optimizer.zero_grad()
        loss = F.mse(student_forward(student, dataset.local[batch]), dataset.z_target[batch])
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(f"non-finite distillation loss {value} at epoch {epoch}")
        loss.backward()
        optimizer_step(optimizer)
        epochs_run = epoch

        if epoch % config.eval_every and epoch != config.epochs:
            continue
        heldout = _mse(student, dataset, held_idx)
        rows.append({"epoch": epoch, "train_mse": _mse(student, dataset, train_idx), "heldout_mse": heldout})
        logger.debug("Distillation progress", rows[-1])
        if heldout < best:
            best, best_params, stale = heldout, store.state_dict(), 0
            continue
        stale += 1
        if stale >= config.patience:
            logger.info("Early stopping", {"epoch": epoch, "best_heldout_mse": best})
            break

    store.load_state(best_params)
    logger.info(
        "Trained student",
        {"epochs": epochs_run, "initial_heldout_mse": initial, "heldout_mse": best, "samples": len(dataset)},
    )
    return DistillResult(
        params=best_params,
        history=pd.DataFrame(rows, columns=DISTILL_COLUMNS),
        initial_heldout_mse=initial,
        heldout_mse=best,
        epochs_run=epochs_run,
    )


### Decentralized execution ###


class StudentExecutor(DecentralizedExecutor):
    """Stage-1 agent network fed the student's estimate z' instead of the teacher message."""

    def __init__(self, agent: AgentNetwork, student: StudentNetwork, n_agents: int):
        if agent.d_z != student.d_z:
            raise ValueError(f"student emits {student.d_z}-dim messages, agent expects {agent.d_z}")
        self.agent = agent
        self.student = student
        self.n_agents = n_agents

    def initial_hidden(self, n_rows: int) -> np.ndarray:
        return self.agent.initial_hidden(n_rows)

    def act(self, local: LocalInfo, hidden: np.ndarray):
        with no_grad():
            message = student_forward(self.student, local)
            outputs, hidden = agent_forward(self.agent, local, hidden, message)
        return outputs.data.argmax(axis=-1), hidden.data


def build_decentralized_policy(
    checkpoint: Checkpoint,
    student_params: Union[Checkpoint, Mapping[str, np.ndarray]],
    config: ExperimentConfig,
    spec: EnvSpec,
) -> StudentExecutor:
    """
    Assemble the distilled executor from the stage-1 agent and a trained student.

    The agent is substituted as is; only the message source changes.

    Raises:
        PrerequisiteError: If the variant has no GIS teacher
        CheckpointError: If either parameter set is incomplete
    """
    networks = load_teacher(checkpoint, config, spec)
    store = networks.store
    student = build_student(spec, config.nets, store, Rng(0))
    params = student_params.params if isinstance(student_params, Checkpoint) else dict(student_params)
    missing = [name for name in store.names(f"{student.prefix}.") if name not in params]
    if missing:
        raise CheckpointError(f"student parameters missing: {missing}")
    store.load_state({name: params[name] for name in store.names(f"{student.prefix}.")}, strict=False)
    store.freeze()
    return StudentExecutor(networks.agent, student, spec.n_agents)
