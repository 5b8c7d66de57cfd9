import io
import logging
from contextlib import contextmanager
from typing import Any, Dict, List, Optional

import numpy as np

from ptde.interfaces import EnvSpec, LocalInfo
from ptde.learners.episode import EpisodeBatch


def random_local(spec: EnvSpec, episodes: int, rng: np.random.Generator) -> LocalInfo:
    """LocalInfo rows for ``episodes`` x n agents with random observations and last actions."""
    obs = rng.normal(size=(episodes, spec.n_agents, spec.obs_dim))
    last = rng.integers(-1, spec.n_actions, size=(episodes, spec.n_agents))
    return LocalInfo.from_step(obs, last, spec.n_actions)


def random_batch(spec: EnvSpec, lengths, rng: np.random.Generator, truncated: bool = False) -> EpisodeBatch:
    """
    A padded EpisodeBatch with random contents and the given episode lengths.

    Every episode ends on its last valid step; ``truncated`` marks that end as a time limit.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    batch, steps, n = len(lengths), spec.episode_limit, spec.n_agents
    valid = (np.arange(steps)[None, :] < lengths[:, None]).astype(np.float64)
    ends = np.zeros((batch, steps))
    ends[np.arange(batch), lengths - 1] = 1.0
    return EpisodeBatch(
        obs=rng.normal(size=(batch, steps + 1, n, spec.obs_dim)),
        state=rng.normal(size=(batch, steps + 1, spec.state_dim)),
        actions=rng.integers(0, spec.n_actions, size=(batch, steps, n)) * valid[..., None].astype(np.int64),
        reward=rng.normal(size=(batch, steps)) * valid,
        terminated=ends,
        truncated=ends if truncated else np.zeros((batch, steps)),
        mask=valid,
        won=np.zeros(batch, dtype=bool),
        lengths=lengths,
    )


@contextmanager
def capture_logs():
    """
    Context manager to capture logs during tests.

    Yields:
        A list that will contain the captured log records
    """
    captured_logs = []
    handler = logging.StreamHandler(io.StringIO())

    # Save the log records
    handler.emit = lambda record: captured_logs.append(record)

    logger = logging.getLogger("ptde")
    level = logger.level
    logger.setLevel(logging.DEBUG)
    logger.addHandler(handler)

    try:
        yield captured_logs
    finally:
        logger.removeHandler(handler)
        logger.setLevel(level)


def get_metadata_from_logs(logs: List[logging.LogRecord], message_contains: Optional[str] = None) -> Dict[str, Any]:
    """
    Extract metadata from captured logs.

    Args:
        logs: List of captured log records
        message_contains: Optional substring to filter logs by message content

    Returns:
        Dictionary of metadata from matching log records
    """
    matching_logs = logs
    if message_contains:
        matching_logs = [log for log in logs if hasattr(log, "msg") and message_contains in str(log.msg)]

    metadata = {}
    for log in matching_logs:
        if hasattr(log, "metadata"):
            metadata.update(log.metadata)

    return metadata
