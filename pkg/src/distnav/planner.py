"""Fast-marching path planning on the mapped obstacle grid, path readout and
conversion to discrete actions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .distance import geodesic_cells
from .scene import Action, Kinematics, Pose, swept_cells

_SQ = math.sqrt(2.0)


@dataclass
class TravelTimeField:
    arrival: np.ndarray   # cell units, +inf where not reached
    sources: np.ndarray   # bool mask
    free: np.ndarray      # bool mask the front propagated through


def _mask(cells, shape):
    cells = np.asarray(cells)
    if cells.dtype == bool and cells.shape == shape:
        return cells
    m = np.zeros(shape, dtype=bool)
    cells = cells.reshape(-1, 2).astype(np.int64)
    if len(cells):
        m[cells[:, 0], cells[:, 1]] = True
    return m


def fmm_solve(obstacles, sources, *, initial=None, stop=None) -> TravelTimeField:
    """First-order eikonal solve with unit speed on free cells.

    ``initial`` optionally assigns starting arrival values to the sources
    (same order as ``np.nonzero`` of the source mask). ``stop`` is a mask of
    cells after whose acceptance marching may end early.
    """
    obstacles = np.asarray(obstacles, dtype=bool)
    free = np.ascontiguousarray(~obstacles)
    src = _mask(sources, free.shape)
    if not src.any():
        raise ValueError("empty source set")
    if (src & obstacles).any():
        raise ValueError("source on obstacle")
    sr, sc = np.nonzero(src)
    t0 = np.zeros(len(sr)) if initial is None else np.asarray(initial, dtype=float)
    if stop is None:
        stop_mask, n_stop = np.zeros((1, 1), dtype=bool), 0
    else:
        stop_mask = np.ascontiguousarray(stop & free)
        n_stop = int(stop_mask.sum())
    T = _kernels.fmm(free, sr.astype(np.int64), sc.astype(np.int64), t0, stop_mask, n_stop)
    return TravelTimeField(T, src, free)


def dijkstra_solve(obstacles, sources, *, stop=None) -> TravelTimeField:
    free = ~np.asarray(obstacles, dtype=bool)
    src = _mask(sources, free.shape)
    if (src & ~free).any():
        raise ValueError("source on obstacle")
    T = geodesic_cells(free, src, stop=stop)
    return TravelTimeField(T, src, free)


def extract_path(field: TravelTimeField, start, max_len: int = None) -> list:
    """Descent from start to a source. A continuous point follows the upwind
    gradient in half-cell steps and the path records the cells it rounds to,
    so off-axis directions are tracked without drift. When the next cell would
    not lower arrival or would cut a corner, the walk takes the steepest
    8-neighbor (slope normalized by step length) instead. Staircase pairs
    are then merged into diagonals. Arrival strictly decreases along the
    returned cell list."""
    r, c = int(start[0]), int(start[1])
    if not math.isfinite(field.arrival[r, c]):
        raise ValueError(f"start {start} unreachable")
    cells, stalled, sr, sc = _kernels.descend(field.arrival, field.free, field.sources,
                                             r, c, -1 if max_len is None else int(max_len))
    if stalled:
        raise RuntimeError(f"descent stalled at {(int(sr), int(sc))}")
    return [(int(a), int(b)) for a, b in cells]


def path_length(path) -> float:
    """Length in cells of a cell path."""
    total = 0.0
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        total += _SQ if (r0 != r1 and c0 != c1) else 1.0
    return total


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def segment_blocked(pose: Pose, dist: float, obstacles, origin=(0, 0)) -> bool:
    """True when a forward move would cross an obstacle of the (local) map."""
    rows, cols = swept_cells(pose, dist)
    rows = rows - origin[0]
    cols = cols - origin[1]
    h, w = obstacles.shape
    inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    return bool(obstacles[rows[inside], cols[inside]].any())


def path_to_action(path, pose: Pose, kin: Kinematics = Kinematics(), origin=(0, 0), *,
                   goal_kind: str = None, remaining_m: float = None,
                   stop_radius: float = 1.0, obstacles=None) -> Action:
    """Turn toward the waypoint one forward step down the path, or move.

    Stop when heading for a target goal and the planned remaining distance is
    within ``stop_radius``. With ``obstacles`` given, a forward move that
    would cross a mapped obstacle becomes a turn toward the waypoint side.
    """
    if not path:
        raise ValueError("empty path")
    if goal_kind == "target_goal" and remaining_m is not None and remaining_m <= stop_radius:
        return Action.STOP
    if obstacles is not None and len(path) > 1:
        return _scored_action(path, pose, kin, origin, obstacles)
    reach = kin.forward_cells
    wp = path[-1]
    for cell in path[1:]:
        if math.hypot(cell[0] + origin[0] + 0.5 - pose.y, cell[1] + origin[1] + 0.5 - pose.x) >= reach:
            wp = cell
            break
    dy = wp[0] + origin[0] + 0.5 - pose.y
    dx = wp[1] + origin[1] + 0.5 - pose.x
    if abs(dx) < 1e-9 and abs(dy) < 1e-9:
        return Action.TURN_LEFT
    err = _wrap(math.atan2(-dy, dx) - pose.heading)
    if abs(err) > kin.turn_angle / 2:
        return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
    return Action.MOVE_FORWARD


def _scored_action(path, pose, kin, origin, obstacles, turn_cost: float = 1.0) -> Action:
    """Pick the heading, reachable by whole turns, whose collision-free forward
    move ends closest to the goal along the path (remaining path length plus
    straight-line offset to the nearby part of the path), charging
    ``turn_cost`` cells per turn.
    Move if that is the current heading, else turn toward it."""
    pts = np.asarray(path, dtype=float) + np.asarray(origin, dtype=float) + 0.5
    seg = np.hypot(*np.diff(pts, axis=0).T)
    rem = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    # only the path prefix near the agent: offsets to far path cells could cut through walls
    near = rem[0] - rem <= 2 * kin.forward_cells + 2
    pts, rem = pts[near], rem[near]
    n_turn = max(1, int(round(2 * math.pi / kin.turn_angle)))
    dist = kin.forward_cells
    best = None
    for k in range(n_turn):
        j = k if k <= n_turn // 2 else k - n_turn   # signed turns, left positive
        h = pose.heading + j * kin.turn_angle
        p = Pose(pose.x, pose.y, h)
        if segment_blocked(p, dist, obstacles, origin):
            continue
        ey, ex = pose.y - dist * math.sin(h), pose.x + dist * math.cos(h)
        cost = float(np.min(rem + np.hypot(pts[:, 0] - ey, pts[:, 1] - ex))) + turn_cost * abs(j)
        key = (cost, abs(j), -j)
        if best is None or key < best[0]:
            best = (key, j)
    if best is None or best[1] == 0:
        return Action.MOVE_FORWARD if best is not None else Action.TURN_LEFT
    return Action.TURN_LEFT if best[1] > 0 else Action.TURN_RIGHT


@dataclass(frozen=True)
class PlannerConfig:
    backend: str = "fmm"          # "fmm" | "dijkstra"
    inflate_cells: int = 2
    unexplored_traversable: bool = True
    margin_cells: int = 4

    def __post_init__(self):
        if self.backend not in ("fmm", "dijkstra"):
            raise ValueError(f"unknown planner backend {self.backend!r}")


@dataclass
class Plan:
    path: list            # local cells, agent first
    distance_m: float     # planned length from the agent to the goal set
    reached_source: bool
    slack_m: float = 0.0  # goal cells may lie up to this far beyond the path end


_STRUCT8 = np.ones((3, 3), dtype=bool)


class Reach:
    """Travel-time field from the agent, restricted to a sub-window of the
    local grid. ``distance_m`` is full-size; paths are read out by descending
    from a goal cell back to the agent."""

    def __init__(self, field: TravelTimeField, offset, shape, cell_size):
        self.field = field
        self.offset = offset
        self.cell_size = cell_size
        r0, c0 = offset
        h, w = field.arrival.shape
        self.distance_m = np.full(shape, np.inf)
        self.distance_m[r0:r0 + h, c0:c0 + w] = field.arrival * cell_size

    def path_to(self, cell, lookahead: int = None) -> Plan:
        r0, c0 = self.offset
        sub = (cell[0] - r0, cell[1] - c0)
        back = extract_path(self.field, sub)
        path = [(a + r0, b + c0) for a, b in reversed(back)]
        if lookahead is not None:
            path = path[:lookahead]
        return Plan(path, float(self.field.arrival[sub]) * self.cell_size, True,
                    getattr(self, "slack_m", 0.0))

    def nearest(self, mask):
        """Cell of ``mask`` with the smallest arrival (row-major ties), or
        None when none is reachable."""
        d = np.where(mask, self.distance_m, np.inf)
        i = int(np.argmin(d))
        if not math.isfinite(d.flat[i]):
            return None
        return np.unravel_index(i, d.shape)


class Planner:
    """Plans on the local map window. Mapped (and bumped-into) obstacles are
    inflated; unexplored cells are optimistic free space by default. Work is
    restricted to the bounding box of the explored area, goal and agent."""

    def __init__(self, cfg: PlannerConfig = PlannerConfig()):
        self.cfg = cfg

    def blocked(self, grid, extra_obstacles=None, inflate=None):
        obst = grid.obstacle
        if extra_obstacles is not None:
            obst = obst | extra_obstacles
        n = self.cfg.inflate_cells if inflate is None else inflate
        blocked = ndimage.binary_dilation(obst, _STRUCT8, iterations=n) if n > 0 else obst.copy()
        if not self.cfg.unexplored_traversable:
            blocked |= ~grid.explored
        return blocked, obst

    def _region(self, grid, *masks, agent=None):
        m = self.cfg.margin_cells
        h, w = grid.shape
        rows, cols = [], []
        for mask in (grid.explored,) + masks:
            rr, cc = np.nonzero(mask.any(axis=1))[0], np.nonzero(mask.any(axis=0))[0]
            if len(rr):
                rows += [rr[0], rr[-1]]
                cols += [cc[0], cc[-1]]
        if agent is not None:
            rows.append(agent[0])
            cols.append(agent[1])
        if not rows:
            return 0, 0, h, w
        return (max(min(rows) - m, 0), max(min(cols) - m, 0),
                min(max(rows) + m + 1, h), min(max(cols) + m + 1, w))

    def _solve(self, blocked, sources, stop):
        if self.cfg.backend == "fmm":
            return fmm_solve(blocked, sources, stop=stop)
        return dijkstra_solve(blocked, sources, stop=stop)

    def goal_sources(self, grid, goal_mask, obst, width: int = 1):
        """Free cells to plan toward: goal cells themselves when free, else
        the free cells within ``width`` (Chebyshev) of them; objects on the map
        are obstacles. The ring must be wider than the inflation, or
        inflation would seal it off."""
        free_goal = goal_mask & ~obst
        on_obst = goal_mask & obst
        if on_obst.any():
            ring = ndimage.binary_dilation(on_obst, _STRUCT8, iterations=width) & ~obst
            free_goal |= ring
        return free_goal

    def reach(self, grid, agent_cell, goal_mask, extra_obstacles=None, inflate=None) -> Reach:
        """Solve outward from the agent until every reachable goal cell is
        settled. Goal cells on obstacles are replaced by their free
        neighbors, which are exempt from inflation."""
        blocked, obst = self.blocked(grid, extra_obstacles, inflate)
        n = self.cfg.inflate_cells if inflate is None else inflate
        targets = self.goal_sources(grid, goal_mask, obst, width=n + 1)
        blocked &= ~targets
        r, c = agent_cell
        # never trap the agent inside its own inflation
        k = n + 1
        ra, ca = max(r - k, 0), max(c - k, 0)
        blocked[ra:r + k + 1, ca:c + k + 1] &= obst[ra:r + k + 1, ca:c + k + 1]
        blocked[r, c] = False
        r0, c0, r1, c1 = self._region(grid, targets, agent=agent_cell)
        src = np.zeros((r1 - r0, c1 - c0), dtype=bool)
        src[r - r0, c - c0] = True
        f = self._solve(blocked[r0:r1, c0:c1], src, targets[r0:r1, c0:c1])
        out = Reach(f, (r0, c0), grid.shape, grid.cell_size)
        out.targets = targets
        # worst-case gap between a reached ring cell and the goal it stands for
        out.slack_m = (n + 1) * math.sqrt(2) * grid.cell_size if (goal_mask & obst).any() else 0.0
        return out

    def distance_from(self, grid, cell, targets, extra_obstacles=None) -> np.ndarray:
        """Planned distance (meters) from ``cell`` to each cell of
        ``targets``; +inf elsewhere or when unreachable."""
        d = self.reach(grid, cell, targets, extra_obstacles).distance_m
        return np.where(targets, d, np.inf)

    def plan(self, grid, agent_cell, goal_mask, extra_obstacles=None, lookahead: int = None) -> Plan:
        """Shortest path from the agent to the goal set, or None if no path
        exists even without inflation."""
        for inflate in (None, 0):
            rc = self.reach(grid, agent_cell, goal_mask, extra_obstacles, inflate)
            cell = rc.nearest(rc.targets)
            if cell is not None:
                return rc.path_to(cell, lookahead)
        return None
