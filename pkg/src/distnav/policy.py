"""Mid-term goal selection.

Pure selectors (``select_goal_*``) take the frontier, per-cell predicted
distance values and the agent-to-cell geodesic, and return a MidTermGoal.
Cells with an infinite geodesic (not reachable on the current map) are never
candidates. ``GoalPolicy`` subclasses add the per-episode state: reached
frontier goals, goal commitment and the step counter for the corner cycle.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .distance import UNKNOWN
from .predictor import prediction_values

FRONTIER_GOAL = "frontier_goal"
TARGET_GOAL = "target_goal"
EXPLORATION_CORNER = "exploration_corner"
CORNER_PERIOD = 100


@dataclass(frozen=True)
class MidTermGoal:
    cell: tuple       # global (row, col)
    kind: str
    chosen_by: str

    @property
    def is_fallback(self) -> bool:
        return self.kind == EXPLORATION_CORNER


def _debug() -> bool:
    return os.environ.get("OBJNAV_DEBUG", "") not in ("", "0")


def corner_cell(shape, step: int, period: int = CORNER_PERIOD) -> tuple:
    """Local corner of the window for ``step``: clockwise from top-left,
    switching every ``period`` steps."""
    h, w = shape
    corners = [(0, 0), (0, w - 1), (h - 1, w - 1), (h - 1, 0)]
    return corners[(step // period) % 4]


def select_goal_random_exp(shape, origin, step: int, period: int = CORNER_PERIOD) -> MidTermGoal:
    r, c = corner_cell(shape, step, period)
    return MidTermGoal((r + origin[0], c + origin[1]), EXPLORATION_CORNER, "random")


def _candidates(mask, geo):
    """Row-major candidate cells and their geodesic, finite geodesic only."""
    rows, cols = np.nonzero(mask & np.isfinite(geo))
    return rows, cols, geo[rows, cols]


def lexicographic_argmin(primary, geo, rows, cols) -> int:
    """Index minimizing (primary, geo, row, col)."""
    return int(np.lexsort((cols, rows, geo, primary))[0])


def exhaustive_argmin(primary, geo, rows, cols) -> int:
    best = None
    for i in range(len(rows)):
        key = (primary[i], geo[i], rows[i], cols[i])
        if best is None or key < best[0]:
            best = (key, i)
    return best[1]


def _pick(primary, geo, rows, cols):
    i = lexicographic_argmin(primary, geo, rows, cols)
    if _debug():
        j = exhaustive_argmin(primary, geo, rows, cols)
        if (rows[i], cols[i]) != (rows[j], cols[j]):
            raise AssertionError(f"argmin mismatch: {(rows[i], cols[i])} vs {(rows[j], cols[j])}")
    return i


def target_override(target_mask, origin, chosen_by, agent_cell=None):
    """Target goal on the mapped target cell nearest the agent (Euclidean,
    row-major ties), or None if the target is not on the map."""
    if target_mask is None or not target_mask.any():
        return None
    cells = np.argwhere(target_mask)
    if agent_cell is None:
        r, c = cells[0]
    else:
        d = ((cells - np.asarray(agent_cell)) ** 2).sum(axis=1)
        r, c = cells[int(np.argmin(d))]
    return MidTermGoal((int(r) + origin[0], int(c) + origin[1]), TARGET_GOAL, chosen_by)


def _value_goal(name, mask, values, geo, bins, n_bins, origin, fallback, use_geo_in_value,
                force=False):
    rows, cols, g = _candidates(mask, geo)
    if len(rows) == 0:
        return fallback
    v = values[rows, cols]
    b = bins[rows, cols]
    informative = (b != UNKNOWN) & (b != n_bins - 1)
    if not force and not informative.any():
        return fallback
    primary = v + g if use_geo_in_value else v
    i = _pick(primary, g, rows, cols)
    return MidTermGoal((int(rows[i]) + origin[0], int(cols[i]) + origin[1]), FRONTIER_GOAL, name)


def _fallback(fallback, shape, origin):
    return fallback if fallback is not None else select_goal_random_exp(shape, origin, 0)


def select_goal_pp(frontier, prediction, geo, *, origin=(0, 0), target_mask=None,
                   fallback=None, value_mode="bin", agent_cell=None) -> MidTermGoal:
    """argmin over the frontier of geodesic + predicted distance."""
    goal = target_override(target_mask, origin, "pp", agent_cell)
    if goal is not None:
        return goal
    fb = _fallback(fallback, frontier.mask.shape, origin)
    values = prediction_values(prediction, value_mode)
    return _value_goal("pp", frontier.mask, values, geo, prediction.bins, len(prediction.partition),
                       origin, fb, True)


def select_goal_cf(frontier, prediction, geo, *, origin=(0, 0), target_mask=None,
                   fallback=None, value_mode="bin", agent_cell=None, _name="cf") -> MidTermGoal:
    """argmin over the frontier of the predicted distance alone; the geodesic
    only breaks ties."""
    goal = target_override(target_mask, origin, _name, agent_cell)
    if goal is not None:
        return goal
    fb = _fallback(fallback, frontier.mask.shape, origin)
    values = prediction_values(prediction, value_mode)
    return _value_goal(_name, frontier.mask, values, geo, prediction.bins, len(prediction.partition),
                       origin, fb, False)


def select_goal_def(frontier, prediction, geo, p_door: float, *, origin=(0, 0), target_mask=None,
                    fallback=None, value_mode="bin", agent_cell=None) -> MidTermGoal:
    """Closest-first restricted to the door sector when a door is seen and
    the sector holds a reachable cell; plain closest-first otherwise."""
    goal = target_override(target_mask, origin, "def", agent_cell)
    if goal is not None:
        return goal
    fb = _fallback(fallback, frontier.mask.shape, origin)
    sector = frontier.door_sector
    if p_door >= 0.5 and sector is not None and (sector & np.isfinite(geo)).any():
        values = prediction_values(prediction, value_mode)
        return _value_goal("def", sector, values, geo, prediction.bins, len(prediction.partition),
                           origin, fb, False, force=True)
    return select_goal_cf(frontier, prediction, geo, origin=origin, fallback=fb,
                          value_mode=value_mode, _name="def")


def select_goal_frontier_exp(frontier, geo, visited=None, *, origin=(0, 0), target_mask=None,
                             fallback=None, agent_cell=None) -> MidTermGoal:
    """Nearest reachable frontier cell not in ``visited`` (local mask)."""
    goal = target_override(target_mask, origin, "frontier", agent_cell)
    if goal is not None:
        return goal
    fb = _fallback(fallback, frontier.mask.shape, origin)
    mask = frontier.mask if visited is None else frontier.mask & ~visited
    rows, cols, g = _candidates(mask, geo)
    if len(rows) == 0:
        return fb
    i = _pick(g, g, rows, cols)
    return MidTermGoal((int(rows[i]) + origin[0], int(cols[i]) + origin[1]), FRONTIER_GOAL, "frontier")


# -- stateful wrappers ------------------------------------------------------

@dataclass
class StepInput:
    """What a policy sees at one step (all grids in local coordinates)."""
    grid: object            # local SemanticGrid
    frontier: object        # FrontierSet (door sector filled in when a door is seen)
    geo: np.ndarray         # meters from the agent, +inf where unreachable
    step: int
    agent_cell: tuple       # local
    target_mask: np.ndarray = None
    prediction: object = None
    p_door: float = 0.0


class GoalPolicy:
    """Per-episode goal selection state.

    A frontier goal counts as reached once the agent is within
    ``reach_radius_m`` of it; frontier cells around a reached goal are
    remembered (global frame) and excluded from later selections, so frontier
    cells that can never be observed, such as concave wall corners, cannot
    hold the agent forever.
    """
    name = "base"
    needs_prediction = False
    needs_frontier = True

    def __init__(self, *, commit_steps: int = 0, reach_radius_m: float = 0.5,
                 corner_period: int = CORNER_PERIOD, value_mode: str = "bin"):
        self.commit_steps = commit_steps
        self.reach_radius_m = reach_radius_m
        self.corner_period = corner_period
        self.value_mode = value_mode
        self.reset()

    def reset(self):
        self.visited = set()
        self.goal = None
        self.goal_age = 0

    def _visited_mask(self, grid):
        m = np.zeros(grid.shape, dtype=bool)
        if self.visited:
            cells = np.array(list(self.visited)) - np.asarray(grid.origin)
            h, w = grid.shape
            ok = (cells[:, 0] >= 0) & (cells[:, 0] < h) & (cells[:, 1] >= 0) & (cells[:, 1] < w)
            cells = cells[ok]
            m[cells[:, 0], cells[:, 1]] = True
        return m

    def mark_reached(self, grid, frontier_mask, goal_cell):
        """Remember the goal and the frontier cells within the reach radius."""
        gr, gc = goal_cell[0] - grid.origin[0], goal_cell[1] - grid.origin[1]
        rad = self.reach_radius_m / grid.cell_size
        self.visited.add(tuple(goal_cell))
        cells = np.argwhere(frontier_mask)
        if len(cells):
            near = np.hypot(cells[:, 0] - gr, cells[:, 1] - gc) <= rad
            for r, c in cells[near]:
                self.visited.add((int(r) + grid.origin[0], int(c) + grid.origin[1]))

    def _reached(self, grid, agent_cell, goal) -> bool:
        gr, gc = goal.cell[0] - grid.origin[0], goal.cell[1] - grid.origin[1]
        return math.hypot(agent_cell[0] - gr, agent_cell[1] - gc) * grid.cell_size <= self.reach_radius_m

    def fallback(self, inp: StepInput) -> MidTermGoal:
        g = select_goal_random_exp(inp.grid.shape, inp.grid.origin, inp.step, self.corner_period)
        return MidTermGoal(g.cell, g.kind, self.name)

    def choose(self, inp: StepInput, frontier) -> MidTermGoal:
        raise NotImplementedError

    def select(self, inp: StepInput) -> MidTermGoal:
        origin = inp.grid.origin
        override = target_override(inp.target_mask, origin, self.name, inp.agent_cell)
        if override is not None:
            self.goal = override
            return override
        if self.goal is not None and self.goal.kind == FRONTIER_GOAL:
            if self._reached(inp.grid, inp.agent_cell, self.goal):
                self.mark_reached(inp.grid, inp.frontier.mask, self.goal.cell)
                self.goal = None
            elif self.commit_steps and self.goal_age < self.commit_steps:
                gr, gc = self.goal.cell[0] - origin[0], self.goal.cell[1] - origin[1]
                h, w = inp.grid.shape
                if (0 <= gr < h and 0 <= gc < w and inp.frontier.mask[gr, gc]
                        and math.isfinite(inp.geo[gr, gc])):
                    self.goal_age += 1
                    return self.goal
        visited = self._visited_mask(inp.grid)
        frontier = inp.frontier
        if visited.any():
            ds = None if frontier.door_sector is None else frontier.door_sector & ~visited
            frontier = type(frontier)(frontier.mask & ~visited, ds)
        goal = self.choose(inp, frontier)
        if self.goal is None or goal.cell != self.goal.cell:
            self.goal_age = 1
        else:
            self.goal_age += 1
        self.goal = goal
        return goal


class RandomExpPolicy(GoalPolicy):
    name = "random"
    needs_frontier = False

    def choose(self, inp, frontier):
        return self.fallback(inp)


class FrontierExpPolicy(GoalPolicy):
    """Nearest unvisited frontier; a goal is kept until reached or until it
    stops being a reachable frontier cell."""
    name = "frontier"

    def __init__(self, **kw):
        kw.setdefault("commit_steps", 10 ** 9)
        super().__init__(**kw)

    def choose(self, inp, frontier):
        return select_goal_frontier_exp(frontier, inp.geo, origin=inp.grid.origin,
                                        fallback=self.fallback(inp))


class CFPolicy(GoalPolicy):
    name = "cf"
    needs_prediction = True

    def choose(self, inp, frontier):
        return select_goal_cf(frontier, inp.prediction, inp.geo, origin=inp.grid.origin,
                              fallback=self.fallback(inp), value_mode=self.value_mode)


class PPPolicy(GoalPolicy):
    name = "pp"
    needs_prediction = True

    def choose(self, inp, frontier):
        return select_goal_pp(frontier, inp.prediction, inp.geo, origin=inp.grid.origin,
                              fallback=self.fallback(inp), value_mode=self.value_mode)


class DEFPolicy(GoalPolicy):
    name = "def"
    needs_prediction = True
    needs_door_sector = True

    def __init__(self, theta_d: float = math.radians(120), **kw):
        self.theta_d = theta_d
        super().__init__(**kw)

    def choose(self, inp, frontier):
        return select_goal_def(frontier, inp.prediction, inp.geo, inp.p_door, origin=inp.grid.origin,
                               fallback=self.fallback(inp), value_mode=self.value_mode)


POLICIES = {p.name: p for p in (PPPolicy, CFPolicy, DEFPolicy, RandomExpPolicy, FrontierExpPolicy)}


def make_policy(name: str, **kw) -> GoalPolicy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    return cls(**kw)
