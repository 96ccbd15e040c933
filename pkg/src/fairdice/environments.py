"""Benchmark MOMDPs: MO-Four-Room and Random MOMDP.

Both put goal rewards on the entering transition, folded into an expected
reward ``r_i(s, a) = sum_s' T(s'|s, a) [s' is goal i]``, and route goals to an
absorbing sink so that episodes fit the discounted stationary formulation.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .momdp import MOMDP, augment_absorbing

log = logging.getLogger(__name__)

# '#' wall, '.' floor. Doorways at (3,5), (8,5), (5,2), (5,7).
FOUR_ROOM_LAYOUT = (
    "###########",
    "#....#....#",
    "#....#....#",
    "#.........#",
    "#....#....#",
    "##.####.###",
    "#....#....#",
    "#....#....#",
    "#.........#",
    "#....#....#",
    "###########",
)
FOUR_ROOM_START = (1, 1)
# objective order: lower-left, upper-right, lower-right
FOUR_ROOM_GOALS_3 = ((9, 1), (1, 9), (9, 9))
FOUR_ROOM_START_8 = (3, 3)
FOUR_ROOM_GOALS_8 = (
    (1, 4), (4, 1),
    (1, 6), (4, 9),
    (6, 1), (9, 4),
    (9, 6), (6, 9),
)

ACTIONS = ("left", "right", "up", "down")
MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0))


def parse_layout(rows) -> np.ndarray:
    """Boolean wall mask from a list of '#'/'.' strings."""
    return np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)


@dataclass
class FourRoomConfig:
    grid: np.ndarray = field(default_factory=lambda: parse_layout(FOUR_ROOM_LAYOUT))
    start_cell: tuple = FOUR_ROOM_START
    goal_cells: tuple = FOUR_ROOM_GOALS_3
    slip_prob: float = 0.1
    gamma: float = 0.95

    @classmethod
    def with_objectives(cls, n_objectives: int, **kwargs) -> "FourRoomConfig":
        if n_objectives == 3:
            return cls(**kwargs)
        if n_objectives == 8:
            kwargs.setdefault("start_cell", FOUR_ROOM_START_8)
            return cls(goal_cells=FOUR_ROOM_GOALS_8, **kwargs)
        raise ValueError("shipped Four-Room layouts have 3 or 8 objectives")

    @property
    def n_objectives(self) -> int:
        return len(self.goal_cells)

    def validate(self) -> None:
        grid = np.asarray(self.grid, dtype=bool)
        cells = [tuple(self.start_cell)] + [tuple(g) for g in self.goal_cells]
        for cell in cells:
            r, c = cell
            if not (0 <= r < grid.shape[0] and 0 <= c < grid.shape[1]) or grid[r, c]:
                raise ValueError(f"cell {cell} is a wall or out of bounds")
        if len(set(map(tuple, self.goal_cells))) != len(self.goal_cells):
            raise ValueError("goal cells must be distinct")
        if tuple(self.start_cell) in set(map(tuple, self.goal_cells)):
            raise ValueError("start cell cannot be a goal")
        if not 0.0 <= self.slip_prob <= 1.0:
            raise ValueError("slip_prob must lie in [0, 1]")


@dataclass
class FourRoomEnv:
    """The MOMDP plus the grid bookkeeping needed for plotting and tests."""

    momdp: MOMDP
    cells: list
    cell_index: dict
    goal_states: list
    start_state: int


def build_four_room_env(cfg: FourRoomConfig) -> FourRoomEnv:
    cfg.validate()
    grid = np.asarray(cfg.grid, dtype=bool)
    cells = [tuple(rc) for rc in zip(*np.nonzero(~grid))]
    index = {cell: i for i, cell in enumerate(cells)}
    S, A, I = len(cells), len(MOVES), cfg.n_objectives
    goal_states = [index[tuple(g)] for g in cfg.goal_cells]

    T = np.zeros((S, A, S))
    for s, (r, c) in enumerate(cells):
        targets = []
        for dr, dc in MOVES:
            nxt = (r + dr, c + dc)
            targets.append(index.get(nxt, s))
        for a in range(A):
            T[s, a, targets[a]] += 1.0 - cfg.slip_prob
            for b in range(A):
                if b != a:
                    T[s, a, targets[b]] += cfg.slip_prob / (A - 1)

    R = np.zeros((S, A, I))
    for i, g in enumerate(goal_states):
        R[:, :, i] = T[:, :, g]
    p0 = np.zeros(S)
    start = index[tuple(cfg.start_cell)]
    p0[start] = 1.0

    unreachable = _unreachable(T, start, goal_states)
    if unreachable:
        log.warning("goal states %s unreachable from start", unreachable)

    m = augment_absorbing(MOMDP(T, R, p0, cfg.gamma), goal_states)
    return FourRoomEnv(m, cells, index, goal_states, start)


def build_four_room(cfg: FourRoomConfig) -> MOMDP:
    return build_four_room_env(cfg).momdp


def _unreachable(T, start, goals) -> list:
    seen = {start}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for t in np.nonzero(T[s].sum(axis=0) > 0)[0]:
            if t not in seen:
                seen.add(int(t))
                queue.append(int(t))
    return [g for g in goals if g not in seen]


@dataclass
class RandomMOMDPConfig:
    seed: int = 0
    n_states: int = 50
    n_actions: int = 4
    n_branch: int = 4
    n_objectives: int = 3
    gamma: float = 0.95
    dirichlet_alpha: tuple = (1.0, 1.0, 1.0, 1.0)

    def validate(self) -> None:
        if self.n_branch > self.n_states - 1:
            raise ValueError("n_branch must be <= n_states - 1")
        if self.n_objectives > self.n_states - 1:
            raise ValueError("n_objectives must be <= n_states - 1")
        if len(self.dirichlet_alpha) != self.n_branch:
            raise ValueError("dirichlet_alpha needs one entry per branch")


def build_random_momdp(cfg: RandomMOMDPConfig) -> MOMDP:
    """Garnet-style random MOMDP with one-hot goal rewards; state 0 is the start."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    S, A, I = cfg.n_states, cfg.n_actions, cfg.n_objectives
    T = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            nxt = rng.choice(S, size=cfg.n_branch, replace=False)
            T[s, a, nxt] = rng.dirichlet(cfg.dirichlet_alpha)
    goals = rng.choice(np.arange(1, S), size=I, replace=False)
    R = np.zeros((S, A, I))
    for i, g in enumerate(goals):
        R[:, :, i] = T[:, :, g]
    p0 = np.zeros(S)
    p0[0] = 1.0
    return augment_absorbing(MOMDP(T, R, p0, cfg.gamma), goals.tolist())

