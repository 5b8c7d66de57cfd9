# GridCapture: agents must surround a static target on a small grid
#
# Actions: 0 stay, 1 up (y+1), 2 down (y-1), 3 left (x-1), 4 right (x+1). Agents move in index
# order; a move off the grid or into an occupied cell (another agent or the target) becomes
# stay. The episode is won when every agent is 4-adjacent to the target (+1 reward); every
# other step costs -0.01. Reaching the step limit terminates the episode without a win.
# The target only spawns on cells with at least n_agents in-grid neighbours, so a capture is
# always reachable.
#
# Observation of agent i: own (x, y) / (size - 1) followed by a 3x3 patch centred on the
# agent, row-major from (x-1, y-1) to (x+1, y+1): wall -1, target 1, other agent 0.5, else 0.
# State: every agent's (x, y) then the target's (x, y), all divided by (size - 1).

from typing import List, Tuple

import numpy as np

from ..core.rng import Rng
from ..exceptions import EnvError, EpisodeTerminated, InvalidAction
from ..interfaces import EnvSpec, MultiAgentEnv, StepResult

MOVES = np.array([[0, 0], [0, 1], [0, -1], [-1, 0], [1, 0]], dtype=np.int64)
ACTION_NAMES = ["stay", "up", "down", "left", "right"]

CAPTURE_REWARD = 1.0
STEP_REWARD = -0.01

WALL, TARGET, OTHER_AGENT = -1.0, 1.0, 0.5


def capturable_cells(size: int, n_agents: int) -> np.ndarray:
    """Flat indices (x + y * size) of the cells with at least ``n_agents`` in-grid 4-neighbours."""
    x, y = np.meshgrid(np.arange(size), np.arange(size))
    neighbours = (x > 0).astype(int) + (x < size - 1) + (y > 0) + (y < size - 1)
    return np.flatnonzero(neighbours.reshape(-1) >= n_agents)


class GridCapture(MultiAgentEnv):
    def __init__(self, size: int = 7, n_agents: int = 3, episode_limit: int = 30, gamma: float = 0.99):
        self.size = size
        self.target_cells = capturable_cells(size, n_agents)
        if self.target_cells.size == 0:
            raise EnvError(f"no cell of a {size}x{size} grid can be surrounded by {n_agents} agents")
        self._spec = EnvSpec(
            n_agents=n_agents,
            n_actions=len(MOVES),
            obs_dim=2 + 9,
            state_dim=2 * (n_agents + 1),
            episode_limit=episode_limit,
            gamma=gamma,
        )
        self.agents = np.zeros((n_agents, 2), dtype=np.int64)
        self.target = np.zeros(2, dtype=np.int64)
        self.steps = 0
        self._done = True

    @property
    def spec(self) -> EnvSpec:
        return self._spec

    def reset(self, rng: Rng) -> Tuple[np.ndarray, List[np.ndarray]]:
        n = self._spec.n_agents
        target = int(rng.choice(self.target_cells))
        free = np.delete(np.arange(self.size * self.size), target)
        cells = np.append(np.asarray(rng.choice(free, size=n, replace=False), dtype=np.int64), target)
        coords = np.stack([cells % self.size, cells // self.size], axis=1)
        self.agents = coords[:n].copy()
        self.target = coords[n].copy()
        self.steps = 0
        self._done = False
        state = self.state()
        return state, [self.observation_from_state(state, i) for i in range(n)]

    def state(self) -> np.ndarray:
        positions = np.concatenate([self.agents.reshape(-1), self.target])
        return positions.astype(np.float64) / (self.size - 1)

    def observation_from_state(self, state: np.ndarray, agent: int) -> np.ndarray:
        """Observation of ``agent``, computed from the global state alone."""
        n = self._spec.n_agents
        coords = np.rint(np.asarray(state) * (self.size - 1)).astype(np.int64).reshape(n + 1, 2)
        agents, target = coords[:n], coords[n]
        x, y = agents[agent]
        patch = np.zeros(9)
        for k, (dy, dx) in enumerate((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)):
            cx, cy = x + dx, y + dy
            if not (0 <= cx < self.size and 0 <= cy < self.size):
                patch[k] = WALL
            elif cx == target[0] and cy == target[1]:
                patch[k] = TARGET
            elif any(j != agent and a[0] == cx and a[1] == cy for j, a in enumerate(agents)):
                patch[k] = OTHER_AGENT
        own = np.array([x, y], dtype=np.float64) / (self.size - 1)
        return np.concatenate([own, patch])

    def _occupied(self, cell: np.ndarray, mover: int) -> bool:
        if np.array_equal(cell, self.target):
            return True
        return any(j != mover and np.array_equal(cell, a) for j, a in enumerate(self.agents))

    def captured(self) -> bool:
        distances = np.abs(self.agents - self.target).sum(axis=1)
        return bool(np.all(distances == 1))

    def step(self, joint_action) -> StepResult:
        if self._done:
            raise EpisodeTerminated("step() after the episode terminated; call reset()")
        actions = np.asarray(joint_action, dtype=np.int64).reshape(-1)
        if actions.shape[0] != self._spec.n_agents:
            raise InvalidAction(f"expected {self._spec.n_agents} actions, got {actions.shape[0]}")
        if np.any(actions < 0) or np.any(actions >= self._spec.n_actions):
            names = ", ".join(ACTION_NAMES)
            raise InvalidAction(f"actions {actions.tolist()} outside [0, {self._spec.n_actions}) ({names})")

        for i, action in enumerate(actions):
            destination = self.agents[i] + MOVES[action]
            inside = np.all((destination >= 0) & (destination < self.size))
            if inside and not self._occupied(destination, i):
                self.agents[i] = destination

        self.steps += 1
        won = self.captured()
        terminated = won or self.steps >= self._spec.episode_limit
        self._done = terminated
        state = self.state()
        return StepResult(
            reward=CAPTURE_REWARD if won else STEP_REWARD,
            terminated=terminated,
            won=won,
            next_state=state,
            next_obs=[self.observation_from_state(state, i) for i in range(self._spec.n_agents)],
            truncated=terminated and not won,
        )
