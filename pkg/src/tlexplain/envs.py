"""Discrete surrogate environments and their distance features.

Two gridworlds are provided:

* :class:`CtfEnv` -- adversarial capture-the-flag.  The blue agent is the
  explained policy; the red agent follows a deterministic border-defense
  heuristic.  Adjacent agents fight: the intruder dies with probability 0.75
  in the defender's territory.
* :class:`NavEnv` -- single-agent goal/hazard/vase navigation with
  deterministic 4-neighborhood dynamics.

Both expose the same tabular interface: ``reset``, ``transitions`` (exact
branch distribution), ``step`` (sampled), ``features``, ``is_terminal`` and
``enumerate_states``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

Cell = tuple[int, int]

# shared action set; nav ignores "stay" walls nothing special
ACTION_NAMES = ("up", "down", "left", "right", "stay")
ACTION_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))


class StepOnTerminalError(RuntimeError):
    pass


class StateSpaceTooLargeError(RuntimeError):
    pass


class MapFormatError(ValueError):
    pass


def euclidean(a: Cell, b: Cell) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def chebyshev(a: Cell, b: Cell) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


# ---------------------------------------------------------------------------
# Capture the flag
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridMap:
    """CtF map: walls, a blue/red territory partition, and two flag cells.

    Text format, one row per line: ``#`` wall, ``b``/``r`` territory cells,
    ``B``/``R`` the blue/red flag (inside their own territory), ``.`` free
    cell defaulting to red territory.
    """

    width: int
    height: int
    walls: frozenset[Cell]
    blue_territory: frozenset[Cell]
    blue_flag: Cell
    red_flag: Cell
    blue_starts: tuple[Cell, ...]
    red_starts: tuple[Cell, ...]

    @classmethod
    def parse(cls, text: str, blue_start: Cell | None = None,
              red_start: Cell | None = None, random_starts: bool = False) -> "GridMap":
        rows = [line for line in text.splitlines() if line.strip()]
        if not rows or len(set(map(len, rows))) != 1:
            raise MapFormatError("map rows must be nonempty and equal length")
        height, width = len(rows), len(rows[0])
        walls, blue_terr = set(), set()
        blue_flag = red_flag = None
        for r, row in enumerate(rows):
            for c, ch in enumerate(row):
                cell = (r, c)
                if ch == "#":
                    walls.add(cell)
                elif ch in ("b", "B"):
                    blue_terr.add(cell)
                    if ch == "B":
                        if blue_flag is not None:
                            raise MapFormatError("multiple blue flags")
                        blue_flag = cell
                elif ch in ("r", "R", "."):
                    if ch == "R":
                        if red_flag is not None:
                            raise MapFormatError("multiple red flags")
                        red_flag = cell
                else:
                    raise MapFormatError(f"unknown map character {ch!r}")
        if blue_flag is None or red_flag is None:
            raise MapFormatError("map needs one B and one R flag cell")
        free = [(r, c) for r in range(height) for c in range(width)
                if (r, c) not in walls]
        red_terr = [cell for cell in free if cell not in blue_terr]
        if random_starts:
            blue_starts = tuple(sorted(c for c in blue_terr if c != blue_flag)) or (blue_flag,)
            red_starts = tuple(sorted(c for c in red_terr if c != red_flag)) or (red_flag,)
        else:
            blue_starts = (blue_start or blue_flag,)
            red_starts = (red_start or red_flag,)
        for cell in blue_starts + red_starts:
            if cell in walls or not (0 <= cell[0] < height and 0 <= cell[1] < width):
                raise MapFormatError(f"start cell {cell} is a wall or outside the map")
        return cls(width, height, frozenset(walls), frozenset(blue_terr),
                   blue_flag, red_flag, blue_starts, red_starts)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def passable(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.walls

    @property
    def diagonal(self) -> float:
        return math.hypot(self.height, self.width)


@dataclass(frozen=True)
class CtfState:
    blue: Cell
    red: Cell
    blue_alive: bool = True
    red_alive: bool = True
    blue_captured: bool = False  # blue took the red flag
    red_captured: bool = False


class CtfEnv:
    """Adversarial gridworld; the blue agent is the policy under study."""

    n_actions = len(ACTION_NAMES)
    action_names = ACTION_NAMES
    feature_names = ("d_ra_bf", "d_ba_rf", "d_ba_ra", "d_ba_bt")
    kill_prob = 0.75

    def __init__(self, grid: GridMap):
        self.grid = grid
        self._border = self._border_cells()
        self._bt_cells = sorted(grid.blue_territory)

    def _border_cells(self) -> tuple[Cell, ...]:
        cells = []
        for cell in sorted(self.grid.blue_territory):
            for dr, dc in ACTION_DELTAS[:4]:
                nb = (cell[0] + dr, cell[1] + dc)
                if self.grid.passable(nb) and nb not in self.grid.blue_territory:
                    cells.append(nb)
        return tuple(sorted(set(cells)))

    # -- dynamics ----------------------------------------------------------

    def reset(self, rng: np.random.Generator | None = None) -> CtfState:
        if rng is None or (len(self.grid.blue_starts) == 1 and len(self.grid.red_starts) == 1):
            return CtfState(self.grid.blue_starts[0], self.grid.red_starts[0])
        blue = self.grid.blue_starts[rng.integers(len(self.grid.blue_starts))]
        red = self.grid.red_starts[rng.integers(len(self.grid.red_starts))]
        return CtfState(blue, red)

    def initial_states(self) -> list[tuple[CtfState, float]]:
        out = []
        p = 1.0 / (len(self.grid.blue_starts) * len(self.grid.red_starts))
        for b in self.grid.blue_starts:
            for r in self.grid.red_starts:
                out.append((CtfState(b, r), p))
        return out

    def is_terminal(self, s: CtfState) -> bool:
        # red's death removes it from play but the episode continues; the
        # explained (blue) agent dying or either flag falling ends it
        return not s.blue_alive or s.blue_captured or s.red_captured

    def _move(self, cell: Cell, action: int) -> Cell:
        dr, dc = ACTION_DELTAS[action]
        nxt = (cell[0] + dr, cell[1] + dc)
        return nxt if self.grid.passable(nxt) else cell

    def _red_move(self, blue: Cell, red: Cell) -> Cell:
        """Deterministic defense: chase blue near the border, else hold it.

        Ties among equally good moves resolve in fixed action order.
        """
        near_border = min(chebyshev(blue, b) for b in self._border) <= 2
        target_dist = ((lambda c: euclidean(c, blue)) if near_border
                       else (lambda c: min(euclidean(c, b) for b in self._border)))
        best, best_d = red, target_dist(red)
        for a in range(4):
            cand = self._move(red, a)
            d = target_dist(cand)
            if d < best_d - 1e-12:
                best, best_d = cand, d
        return best

    def _finish(self, s: CtfState) -> CtfState:
        if s.blue_alive and s.blue == self.grid.red_flag:
            s = replace(s, blue_captured=True)
        if s.red_alive and s.red == self.grid.blue_flag:
            s = replace(s, red_captured=True)
        return s

    def transitions(self, s: CtfState, action: int) -> list[tuple[CtfState, float]]:
        """Exact next-state distribution for (state, action)."""
        if self.is_terminal(s):
            raise StepOnTerminalError(f"step on terminal state {s}")
        blue = self._move(s.blue, action)
        red = self._red_move(blue, s.red) if s.red_alive else s.red
        moved = replace(s, blue=blue, red=red)
        if s.red_alive and chebyshev(blue, red) <= 1:
            # combat: territory of the blue agent's cell decides the defender
            if blue in self.grid.blue_territory:
                dead = replace(moved, red_alive=False)
            else:
                dead = replace(moved, blue_alive=False)
            return [(self._finish(dead), self.kill_prob),
                    (self._finish(moved), 1.0 - self.kill_prob)]
        return [(self._finish(moved), 1.0)]

    def step(self, s: CtfState, action: int, rng: np.random.Generator) -> CtfState:
        branches = self.transitions(s, action)
        if len(branches) == 1:
            return branches[0][0]
        u = rng.random()
        acc = 0.0
        for nxt, p in branches:
            acc += p
            if u < acc:
                return nxt
        return branches[-1][0]

    # -- features ----------------------------------------------------------

    def features(self, s: CtfState) -> np.ndarray:
        d_max = self.grid.diagonal
        d_ra_bf = euclidean(s.red, self.grid.blue_flag) if s.red_alive else d_max
        d_ba_rf = euclidean(s.blue, self.grid.red_flag) if s.blue_alive else d_max
        d_ba_ra = euclidean(s.blue, s.red) if (s.blue_alive and s.red_alive) else d_max
        if not s.blue_alive:
            d_ba_bt = d_max
        elif s.blue in self.grid.blue_territory:
            d_ba_bt = 0.0
        else:
            d_ba_bt = min(euclidean(s.blue, c) for c in self._bt_cells)
        return np.array([d_ra_bf, d_ba_rf, d_ba_ra, d_ba_bt])

    def enumerate_states(self, cap: int = 2_000_000) -> list[CtfState]:
        return _bfs_states(self, cap)


# ---------------------------------------------------------------------------
# Goal / hazard navigation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NavMap:
    """Nav map text format: ``#`` wall, ``.`` free, ``S`` start, ``G`` goal,
    ``H`` hazard, ``V`` vase."""

    width: int
    height: int
    walls: frozenset[Cell]
    start: Cell
    goal: Cell
    hazards: frozenset[Cell]
    vases: frozenset[Cell]

    @classmethod
    def parse(cls, text: str) -> "NavMap":
        rows = [line for line in text.splitlines() if line.strip()]
        if not rows or len(set(map(len, rows))) != 1:
            raise MapFormatError("map rows must be nonempty and equal length")
        height, width = len(rows), len(rows[0])
        walls, hazards, vases = set(), set(), set()
        start = goal = None
        for r, row in enumerate(rows):
            for c, ch in enumerate(row):
                cell = (r, c)
                if ch == "#":
                    walls.add(cell)
                elif ch == "S":
                    start = cell
                elif ch == "G":
                    goal = cell
                elif ch == "H":
                    hazards.add(cell)
                elif ch == "V":
                    vases.add(cell)
                elif ch != ".":
                    raise MapFormatError(f"unknown map character {ch!r}")
        if start is None or goal is None:
            raise MapFormatError("nav map needs one S and one G cell")
        return cls(width, height, frozenset(walls), start, goal,
                   frozenset(hazards), frozenset(vases))

    def passable(self, cell: Cell) -> bool:
        return (0 <= cell[0] < self.height and 0 <= cell[1] < self.width
                and cell not in self.walls)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.height, self.width)


@dataclass(frozen=True)
class NavState:
    pos: Cell


class NavEnv:
    """Deterministic navigation; goal and hazards end the episode, vases do not."""

    n_actions = len(ACTION_NAMES)
    action_names = ACTION_NAMES
    feature_names = ("d_goal", "d_hazard", "d_vase")

    def __init__(self, nav_map: NavMap):
        self.map = nav_map

    def reset(self, rng: np.random.Generator | None = None) -> NavState:
        return NavState(self.map.start)

    def initial_states(self) -> list[tuple[NavState, float]]:
        return [(self.reset(), 1.0)]

    def is_terminal(self, s: NavState) -> bool:
        return s.pos == self.map.goal or s.pos in self.map.hazards

    def transitions(self, s: NavState, action: int) -> list[tuple[NavState, float]]:
        if self.is_terminal(s):
            raise StepOnTerminalError(f"step on terminal state {s}")
        dr, dc = ACTION_DELTAS[action]
        nxt = (s.pos[0] + dr, s.pos[1] + dc)
        return [(NavState(nxt if self.map.passable(nxt) else s.pos), 1.0)]

    def step(self, s: NavState, action: int, rng: np.random.Generator) -> NavState:
        return self.transitions(s, action)[0][0]

    def features(self, s: NavState) -> np.ndarray:
        d_max = self.map.diagonal
        d_goal = euclidean(s.pos, self.map.goal)
        d_haz = min((euclidean(s.pos, c) for c in self.map.hazards), default=d_max)
        d_vase = min((euclidean(s.pos, c) for c in self.map.vases), default=d_max)
        return np.array([d_goal, d_haz, d_vase])

    def enumerate_states(self, cap: int = 2_000_000) -> list[NavState]:
        return _bfs_states(self, cap)


def _bfs_states(env, cap: int) -> list:
    """All states reachable from the start distribution, in BFS order."""
    frontier = [s for s, _ in env.initial_states()]
    seen = dict.fromkeys(frontier)
    while frontier:
        nxt_frontier = []
        for s in frontier:
            if env.is_terminal(s):
                continue
            for a in range(env.n_actions):
                for nxt, _ in env.transitions(s, a):
                    if nxt not in seen:
                        seen[nxt] = None
                        nxt_frontier.append(nxt)
        if len(seen) > cap:
            raise StateSpaceTooLargeError(f"more than {cap} reachable states")
        frontier = nxt_frontier
    return list(seen)
