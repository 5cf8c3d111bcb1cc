"""Deterministic treasure grid with a time-to-treasure bonus as second objective.

Entering a treasure cell at step k (1-based) pays ``[value, 0.05 * (H - k + 1)]``
and ends the episode; all other steps pay nothing. Actions are 2-vectors
decoded by the largest-magnitude component and its sign.
"""
from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np

from ..errors import InvalidConfigurationError

HORIZON = 24
TIME_BONUS = 0.05
START = (0, 0)
# (d_row, d_col) for right, left, down, up
MOVES = np.array([[0, 1], [0, -1], [1, 0], [-1, 0]])
ACTION_VECTORS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def parse_grid(text: str):
    """Parse a whitespace-separated table of '.', '#' or decimal treasure values."""
    rows = []
    for raw in text.splitlines():
        tokens = raw.split()
        # comment lines start with '#' but, unlike wall rows, hold non-cell text
        if not tokens or (tokens[0].startswith("#") and not all(map(_is_cell, tokens))):
            continue
        rows.append(tokens)
    if not rows or len({len(r) for r in rows}) != 1:
        raise InvalidConfigurationError("grid rows must be non-empty and of equal width")
    walls = np.zeros((len(rows), len(rows[0])), dtype=bool)
    values = np.full(walls.shape, np.nan)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            if cell == "#":
                walls[i, j] = True
            elif cell != ".":
                try:
                    values[i, j] = float(cell)
                except ValueError:
                    raise InvalidConfigurationError(f"bad grid cell {cell!r} at ({i}, {j})") from None
                if not values[i, j] > 0:
                    raise InvalidConfigurationError(f"treasure at ({i}, {j}) must be positive")
    if walls[START] or not np.isnan(values[START]):
        raise InvalidConfigurationError("start cell must be free")
    return walls, values


def _is_cell(tok: str) -> bool:
    if tok in (".", "#"):
        return True
    try:
        float(tok)
    except ValueError:
        return False
    return True


class TreasureGrid:
    def __init__(self, walls: np.ndarray, values: np.ndarray, horizon: int = HORIZON):
        self.walls = walls
        self.values = values
        self.horizon = horizon
        self.n_rows, self.n_cols = walls.shape
        n_cells = walls.size
        self.is_treasure = ~np.isnan(values.ravel())
        self.treasure_value = np.nan_to_num(values.ravel())
        nxt = np.empty((n_cells, 4), dtype=int)
        for cell in range(n_cells):
            r, c = divmod(cell, self.n_cols)
            for k, (dr, dc) in enumerate(MOVES):
                rr, cc = r + dr, c + dc
                inside = 0 <= rr < self.n_rows and 0 <= cc < self.n_cols
                nxt[cell, k] = rr * self.n_cols + cc if inside and not walls[rr, cc] else cell
        self.next_cell = nxt
        self.start = START[0] * self.n_cols + START[1]

    @property
    def max_value(self) -> float:
        return float(self.treasure_value.max())

    def observe(self, cell: np.ndarray, t: np.ndarray) -> np.ndarray:
        r, c = np.divmod(cell, self.n_cols)
        return np.stack([r / (self.n_rows - 1), c / (self.n_cols - 1),
                         (self.horizon - t) / self.horizon], axis=-1)

    def cell_from_obs(self, obs: np.ndarray):
        obs = np.atleast_2d(obs)
        r = np.rint(obs[:, 0] * (self.n_rows - 1)).astype(int)
        c = np.rint(obs[:, 1] * (self.n_cols - 1)).astype(int)
        t = np.rint(self.horizon * (1.0 - obs[:, 2])).astype(int)
        return r * self.n_cols + c, t

    @staticmethod
    def decode(actions: np.ndarray) -> np.ndarray:
        a = np.clip(np.atleast_2d(actions), -1.0, 1.0)
        axis = np.argmax(np.abs(a), axis=1)
        positive = a[np.arange(a.shape[0]), axis] >= 0.0
        # axis 0 is horizontal (right/left), axis 1 vertical (down/up)
        return np.where(axis == 0, np.where(positive, 0, 1), np.where(positive, 2, 3))

    def dynamics(self, cell: np.ndarray, t: np.ndarray, actions: np.ndarray):
        move = self.decode(actions)
        new_cell = self.next_cell[cell, move]
        found = self.is_treasure[new_cell]
        rewards = np.zeros((cell.shape[0], 2))
        rewards[found, 0] = self.treasure_value[new_cell[found]]
        rewards[found, 1] = TIME_BONUS * (self.horizon - t[found])
        terminal = found | (t + 1 >= self.horizon)
        return new_cell, rewards, terminal

    def oracle_front(self) -> np.ndarray:
        """Exact non-dominated episode returns by a memoized Pareto-set recursion."""
        from ..metrics import pareto_filter

        @lru_cache(maxsize=None)
        def front(cell: int, t: int):
            if t >= self.horizon:
                return ((0.0, 0.0),)
            pts = []
            for k in range(4):
                nc = int(self.next_cell[cell, k])
                if self.is_treasure[nc]:
                    pts.append((float(self.treasure_value[nc]), TIME_BONUS * (self.horizon - t)))
                else:
                    pts.extend(front(nc, t + 1))
            kept = pareto_filter(np.array(pts))
            return tuple(map(tuple, kept))

        return np.array(sorted(front(self.start, 0)))

    def scalar_policy(self, weights) -> np.ndarray:
        """Greedy action table ``[t, cell]`` for the scalarized return."""
        return _scalar_policy(self, tuple(float(w) for w in weights))

    def expert_actions(self, weights: np.ndarray, obs: np.ndarray) -> np.ndarray:
        weights = np.atleast_2d(weights)
        cell, t = self.cell_from_obs(obs)
        t = np.minimum(t, self.horizon - 1)
        if weights.shape[0] == 1:
            weights = np.repeat(weights, cell.shape[0], axis=0)
        move = np.array([self.scalar_policy(w)[ti, ci] for w, ti, ci in zip(weights, t, cell)])
        return ACTION_VECTORS[move]


@lru_cache(maxsize=4096)
def _scalar_policy(grid: TreasureGrid, weights: tuple) -> np.ndarray:
    w = np.array(weights)
    H = grid.horizon
    value = np.zeros(grid.walls.size)
    total = np.zeros(grid.walls.size)
    table = np.zeros((H, grid.walls.size), dtype=int)
    treasure_util = w[0] * grid.treasure_value
    nxt = grid.next_cell
    hit = grid.is_treasure[nxt]
    for t in range(H - 1, -1, -1):
        bonus = TIME_BONUS * (H - t)
        q = np.where(hit, treasure_util[nxt] + w[1] * bonus, value[nxt])
        q_sum = np.where(hit, grid.treasure_value[nxt] + bonus, total[nxt])
        # among scalar ties prefer the larger unweighted return, then the first action
        tied = q >= q.max(axis=1, keepdims=True) - 1e-12
        best = np.argmax(np.where(tied, q_sum, -np.inf), axis=1)
        rows = np.arange(q.shape[0])
        table[t] = best
        value = q[rows, best]
        total = q_sum[rows, best]
    return table


@lru_cache(maxsize=1)
def default_grid() -> TreasureGrid:
    text = resources.files("promorl").joinpath("data/mo_treasure.grid").read_text()
    return TreasureGrid(*parse_grid(text))
