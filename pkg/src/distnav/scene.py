"""Ground-truth scenes, procedural floorplans, episode sampling and discrete
agent kinematics.

Coordinates: cells are (row, col) with row 0 at the top. Continuous poses use
x = column and y = row in cell units, so the cell of a pose is
``(floor(y), floor(x))``. Heading 0 points along +x and grows counterclockwise
on screen, i.e. toward decreasing rows.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage

CELL_SIZE_M = 0.05
TWO_PI = 2.0 * math.pi


class GenerationError(RuntimeError):
    """Scene generation gave up after the retry budget (infeasible params)."""


class NoReachableTarget(ValueError):
    """No spawn cell satisfies the episode constraints for this target."""


def _frozen_array(a, dtype):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Instance:
    category: int
    cells: np.ndarray  # (n, 2) int rows/cols

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "cells", _frozen_array(cells, np.int64))


@dataclass(frozen=True)
class Door:
    cells: np.ndarray
    orientation: str  # axis of the wall the door sits in: "vertical" | "horizontal"

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "cells", _frozen_array(cells, np.int64))


@dataclass(frozen=True, eq=False)
class Scene:
    width: int
    height: int
    traversable: np.ndarray
    instances: tuple
    doors: tuple
    spawn_cells: np.ndarray
    seed: int
    cell_size: float = CELL_SIZE_M
    scene_id: str = ""
    category_names: tuple = ()

    def __post_init__(self):
        trav = _frozen_array(self.traversable, bool)
        if trav.shape != (self.height, self.width):
            raise ValueError(f"traversable shape {trav.shape} != ({self.height}, {self.width})")
        object.__setattr__(self, "traversable", trav)
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "doors", tuple(self.doors))
        spawn = np.asarray(self.spawn_cells, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "spawn_cells", _frozen_array(spawn, np.int64))
        object.__setattr__(self, "category_names", tuple(self.category_names))

    @cached_property
    def category_grid(self) -> np.ndarray:
        """Per-cell category id, -1 where no instance."""
        grid = np.full((self.height, self.width), -1, dtype=np.int16)
        for inst in self.instances:
            grid[inst.cells[:, 0], inst.cells[:, 1]] = inst.category
        grid.flags.writeable = False
        return grid

    @cached_property
    def door_mask(self) -> np.ndarray:
        mask = np.zeros((self.height, self.width), dtype=bool)
        for door in self.doors:
            mask[door.cells[:, 0], door.cells[:, 1]] = True
        mask.flags.writeable = False
        return mask

    def categories_present(self) -> list[int]:
        return sorted({inst.category for inst in self.instances})

    def target_cells(self, category: int) -> np.ndarray:
        cells = [inst.cells for inst in self.instances if inst.category == category]
        if not cells:
            return np.zeros((0, 2), dtype=np.int64)
        return np.concatenate(cells)

    def validate(self) -> None:
        """Raise ValueError if any scene invariant is violated."""
        h, w = self.height, self.width
        for inst in self.instances:
            c = inst.cells
            if len(c) and (c.min() < 0 or (c[:, 0] >= h).any() or (c[:, 1] >= w).any()):
                raise ValueError("instance cell outside grid")
        sp = self.spawn_cells
        if len(sp) and not self.traversable[sp[:, 0], sp[:, 1]].all():
            raise ValueError("spawn cell not traversable")
        for door in self.doors:
            if not self.traversable[door.cells[:, 0], door.cells[:, 1]].all():
                raise ValueError("door cell not traversable")
        labels, n = ndimage.label(self.traversable)
        if n > 1:
            raise ValueError(f"traversable region has {n} components")

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "width": int(self.width),
            "height": int(self.height),
            "cell_size_m": float(self.cell_size),
            "category_names": list(self.category_names),
            "traversable": self.traversable.astype(np.uint8).ravel().tolist(),
            "instances": [{"category": int(i.category), "cells": i.cells.tolist()}
                          for i in self.instances],
            "doors": [{"cells": d.cells.tolist(), "orientation": d.orientation}
                      for d in self.doors],
            "spawn_cells": self.spawn_cells.tolist(),
            "seed": int(self.seed),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        h, w = int(d["height"]), int(d["width"])
        trav = np.asarray(d["traversable"], dtype=bool).reshape(h, w)
        return cls(
            width=w, height=h, traversable=trav,
            instances=[Instance(int(i["category"]), i["cells"]) for i in d["instances"]],
            doors=[Door(x["cells"], x["orientation"]) for x in d["doors"]],
            spawn_cells=d["spawn_cells"], seed=int(d["seed"]),
            cell_size=float(d.get("cell_size_m", CELL_SIZE_M)),
            scene_id=d.get("scene_id", ""),
            category_names=tuple(d.get("category_names", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Scene":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", float(self.heading) % TWO_PI)

    @property
    def cell(self) -> tuple[int, int]:
        return int(math.floor(self.y)), int(math.floor(self.x))

    @classmethod
    def at_cell(cls, row: int, col: int, heading: float = 0.0) -> "Pose":
        return cls(col + 0.5, row + 0.5, heading)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}


class Action(enum.IntEnum):
    STOP = 0
    MOVE_FORWARD = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3


@dataclass(frozen=True)
class Kinematics:
    forward_step_m: float = 0.25
    turn_angle_deg: float = 30.0
    cell_size: float = CELL_SIZE_M

    @property
    def forward_cells(self) -> float:
        return self.forward_step_m / self.cell_size

    @property
    def turn_angle(self) -> float:
        return math.radians(self.turn_angle_deg)


def step(scene: Scene, pose: Pose, action: Action, kin: Kinematics = Kinematics()):
    """Apply one action. Returns ``(new_pose, collided)``.

    A forward move is rejected (pose unchanged, collision flagged) when any
    point of the swept segment falls in a non-traversable or off-grid cell.
    """
    action = Action(action)
    if action == Action.STOP:
        return pose, False
    if action == Action.TURN_LEFT:
        return Pose(pose.x, pose.y, pose.heading + kin.turn_angle), False
    if action == Action.TURN_RIGHT:
        return Pose(pose.x, pose.y, pose.heading - kin.turn_angle), False
    dist = kin.forward_cells
    rows, cols = swept_cells(pose, dist)
    inside = (rows >= 0) & (rows < scene.height) & (cols >= 0) & (cols < scene.width)
    if not inside.all() or not scene.traversable[rows, cols].all():
        return pose, True
    return Pose(pose.x + dist * math.cos(pose.heading), pose.y - dist * math.sin(pose.heading),
                pose.heading), False


def swept_cells(pose: Pose, dist: float):
    """Cells sampled (4 per cell of travel) along a forward move."""
    dx, dy = math.cos(pose.heading), -math.sin(pose.heading)
    n = max(2, int(math.ceil(dist * 4)) + 1)
    ts = np.linspace(0.0, dist, n)
    cols = np.floor(pose.x + ts * dx).astype(np.int64)
    rows = np.floor(pose.y + ts * dy).astype(np.int64)
    return rows, cols


# -- procedural generation -----------------------------------------------

def default_layout() -> dict:
    text = resources.files("distnav").joinpath("data/generator_default.json").read_text()
    return json.loads(text)


@dataclass
class GeneratorConfig:
    size_m: tuple = (7.0, 9.0)          # side length range for width and height
    n_rooms: tuple = (2, 4)
    min_room_m: float = 2.0
    door_width_m: float = 0.9
    wall_cells: int = 2
    clearance_m: float = 0.3            # free gap kept between unrelated objects
    door_clearance_m: float = 0.5
    spawn_clearance_m: float = 0.3
    min_passage_m: float = 0.3          # no free sliver narrower than this
    min_target_categories: int = 3
    max_retries: int = 200
    layout: dict = field(default_factory=default_layout)

    def __post_init__(self):
        if self.min_room_m < 2.0:
            raise ValueError("min_room_m must be >= 2 m")
        if self.n_rooms[0] < 1 or self.n_rooms[0] > self.n_rooms[1]:
            raise ValueError(f"bad n_rooms {self.n_rooms}")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator keys: {sorted(unknown)}")
        for key in ("size_m", "n_rooms"):
            if key in d:
                d[key] = tuple(d[key])
        if isinstance(d.get("layout"), str):
            d["layout"] = json.loads(Path(d["layout"]).read_text())
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "size_m": list(self.size_m), "n_rooms": list(self.n_rooms),
            "min_room_m": self.min_room_m, "door_width_m": self.door_width_m,
            "wall_cells": self.wall_cells, "clearance_m": self.clearance_m,
            "door_clearance_m": self.door_clearance_m,
            "spawn_clearance_m": self.spawn_clearance_m,
            "min_passage_m": self.min_passage_m,
            "min_target_categories": self.min_target_categories,
            "max_retries": self.max_retries, "layout": self.layout,
        }


PRESETS = {
    "one_room": dict(size_m=(3.5, 5.0), n_rooms=(1, 1)),
    "small": dict(size_m=(3.2, 3.2), n_rooms=(1, 1), clearance_m=0.2),
    "four_room": dict(size_m=(9.0, 11.0), n_rooms=(4, 4)),
    "desk": dict(size_m=(7.0, 9.0), n_rooms=(2, 4)),
}


def preset(name: str, **overrides) -> GeneratorConfig:
    return GeneratorConfig(**{**PRESETS[name], **overrides})


def _cells_of(rect):
    r0, c0, r1, c1 = rect
    rr, cc = np.mgrid[r0:r1, c0:c1]
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _split_rooms(rng, H, W, n_rooms, min_cells, wall, door_w, door_margin):
    """Binary space partition of the interior into rooms. Every split carves
    one door through the new wall, so the rooms stay connected."""
    rooms = [(wall, wall, H - wall, W - wall)]
    doors = []  # (rect of door cells, orientation)
    while len(rooms) < n_rooms:
        order = sorted(range(len(rooms)), key=lambda i: -(rooms[i][2] - rooms[i][0]) * (rooms[i][3] - rooms[i][1]))
        done = False
        for i in order:
            r0, c0, r1, c1 = rooms[i]
            hh, ww = r1 - r0, c1 - c0
            axes = []
            if ww >= 2 * min_cells + wall:
                axes.append("v")
            if hh >= 2 * min_cells + wall:
                axes.append("h")
            if not axes:
                continue
            if len(axes) == 2:
                axis = "v" if ww > hh else "h" if hh > ww else axes[rng.integers(2)]
            else:
                axis = axes[0]
            lo, hi = (c0, c1) if axis == "v" else (r0, r1)
            span_lo, span_hi = (r0, r1) if axis == "v" else (c0, c1)
            # existing doors on the walls bounding this room that the new wall would hit
            blocked = []
            for (dr0, dc0, dr1, dc1), orient in doors:
                if axis == "v" and orient == "horizontal" and (dr1 == r0 or dr0 == r1):
                    blocked.append((dc0 - door_margin, dc1 + door_margin))
                if axis == "h" and orient == "vertical" and (dc1 == c0 or dc0 == c1):
                    blocked.append((dr0 - door_margin, dr1 + door_margin))
            cands = [s for s in range(lo + min_cells, hi - min_cells - wall + 1)
                     if all(s + wall <= b0 or s >= b1 for b0, b1 in blocked)]
            if not cands or span_hi - span_lo < door_w + 2 * door_margin:
                continue
            s = int(cands[rng.integers(len(cands))])
            p = int(rng.integers(span_lo + door_margin, span_hi - door_margin - door_w + 1))
            if axis == "v":
                a, b = (r0, c0, r1, s), (r0, s + wall, r1, c1)
                doors.append(((p, s, p + door_w, s + wall), "vertical"))
            else:
                a, b = (r0, c0, s, c1), (s + wall, c0, r1, c1)
                doors.append(((s, p, s + wall, p + door_w), "horizontal"))
            rooms[i] = a
            rooms.append(b)
            done = True
            break
        if not done:
            return None, None
    return rooms, doors


class _Placer:
    """Furniture placement inside carved rooms with clearance and
    connectivity checks."""

    def __init__(self, rng, cfg: GeneratorConfig, trav, door_mask, cell):
        self.rng = rng
        self.cfg = cfg
        self.trav = trav
        self.cell = cell
        self.occupied = np.zeros_like(trav)
        d = int(round(cfg.door_clearance_m / cell))
        self.door_zone = ndimage.binary_dilation(door_mask, iterations=max(d, 1)) if d else door_mask
        p = int(round(cfg.min_passage_m / cell))
        self.passage = np.ones((p, p), dtype=bool) if p > 1 else None
        self.instances = []

    def _size(self, cat_name):
        h, w = self.cfg.layout["furniture"][cat_name]["size_m"]
        return max(1, int(round(h / self.cell))), max(1, int(round(w / self.cell)))

    def _try_rect(self, rect, room, clearance, exempt=None):
        r0, c0, r1, c1 = rect
        R0, C0, R1, C1 = room
        if r0 < R0 or c0 < C0 or r1 > R1 or c1 > C1:
            return False
        if self.door_zone[r0:r1, c0:c1].any():
            return False
        g = clearance
        window = self.occupied[max(r0 - g, 0):r1 + g, max(c0 - g, 0):c1 + g]
        if exempt is not None:
            ex = exempt[max(r0 - g, 0):r1 + g, max(c0 - g, 0):c1 + g]
            window = window & ~ex
        if window.any():
            return False
        trial = self.trav.copy()
        trial[r0:r1, c0:c1] = False
        _, n = ndimage.label(trial)
        if n != 1:
            return False
        # free cells no agent-sized square covers are gaps nobody can use
        if self.passage is not None and (trial & ~ndimage.binary_opening(trial, self.passage)).any():
            return False
        self.trav[r0:r1, c0:c1] = False
        self.occupied[r0:r1, c0:c1] = True
        return True

    def place(self, cat, cat_name, room, mode, tries=40):
        depth, length = sorted(self._size(cat_name))
        R0, C0, R1, C1 = room
        clearance = int(round(self.cfg.clearance_m / self.cell))
        for _ in range(tries):
            if mode == "wall":
                side = int(self.rng.integers(4))
                if side in (0, 1):  # top / bottom wall, long side horizontal
                    h, w = depth, length
                    if C1 - C0 < w:
                        continue
                    c0 = int(self.rng.integers(C0, C1 - w + 1))
                    r0 = R0 if side == 0 else R1 - h
                else:
                    h, w = length, depth
                    if R1 - R0 < h:
                        continue
                    r0 = int(self.rng.integers(R0, R1 - h + 1))
                    c0 = C0 if side == 2 else C1 - w
            else:
                h, w = (depth, length) if self.rng.random() < 0.5 else (length, depth)
                if R1 - R0 - 2 * clearance < h or C1 - C0 - 2 * clearance < w:
                    continue
                r0 = int(self.rng.integers(R0 + clearance, R1 - clearance - h + 1))
                c0 = int(self.rng.integers(C0 + clearance, C1 - clearance - w + 1))
            rect = (r0, c0, r0 + h, c0 + w)
            if self._try_rect(rect, room, clearance):
                inst = Instance(cat, _cells_of(rect))
                self.instances.append((inst, rect))
                return rect
        return None

    def place_near(self, cat, cat_name, anchor_rect, room, max_gap, tries=40):
        depth, length = sorted(self._size(cat_name))
        a0, b0, a1, b1 = anchor_rect
        anchor = np.zeros_like(self.occupied)
        anchor[a0:a1, b0:b1] = True
        clearance = int(round(self.cfg.clearance_m / self.cell))
        for _ in range(tries):
            side = int(self.rng.integers(4))
            gap = int(self.rng.integers(0, max_gap + 1))
            if side in (0, 1):
                h, w = depth, length
                c0 = int(self.rng.integers(b0 - w + 1, b1))
                r0 = a0 - gap - h if side == 0 else a1 + gap
            else:
                h, w = length, depth
                r0 = int(self.rng.integers(a0 - h + 1, a1))
                c0 = b0 - gap - w if side == 2 else b1 + gap
            rect = (r0, c0, r0 + h, c0 + w)
            # related objects may touch their anchor but keep clear of everything else
            if self._try_rect(rect, room, min(clearance, 2), exempt=anchor):
                self.instances.append((Instance(cat, _cells_of(rect)), rect))
                return rect
        return None


def generate_scene(params: GeneratorConfig, seed: int, scene_id: str = "") -> Scene:
    """Procedural multi-room floorplan with related-object placement.

    Deterministic in ``(params, seed)``. Raises GenerationError when no valid
    scene is found within ``params.max_retries`` attempts.
    """
    layout = params.layout
    names = list(layout["categories"])
    cat_id = {n: i for i, n in enumerate(names)}
    n_t = int(layout["n_targets"])
    cell = CELL_SIZE_M
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x5CE7E]))
    wall = params.wall_cells
    min_cells = int(round(params.min_room_m / cell))
    door_w = int(round(params.door_width_m / cell))
    door_margin = int(round(0.3 / cell))
    lo, hi = (int(round(v / cell)) for v in params.size_m)
    room_types = [t for t in layout["room_types"] if t != layout.get("single_room_type")]

    for _ in range(params.max_retries):
        H = int(rng.integers(lo, hi + 1))
        W = int(rng.integers(lo, hi + 1))
        n_rooms = int(rng.integers(params.n_rooms[0], params.n_rooms[1] + 1))
        rooms, door_rects = _split_rooms(rng, H, W, n_rooms, min_cells, wall, door_w, door_margin)
        if rooms is None:
            continue
        trav = np.zeros((H, W), dtype=bool)
        for r0, c0, r1, c1 in rooms:
            trav[r0:r1, c0:c1] = True
        doors = []
        door_mask = np.zeros_like(trav)
        for (r0, c0, r1, c1), orient in door_rects:
            trav[r0:r1, c0:c1] = True
            door_mask[r0:r1, c0:c1] = True
            doors.append(Door(_cells_of((r0, c0, r1, c1)), orient))

        if len(rooms) == 1:
            types = [layout.get("single_room_type", room_types[0])]
        else:
            perm = list(rng.permutation(len(room_types)))
            types = [room_types[perm[i % len(perm)]] for i in range(len(rooms))]

        placer = _Placer(rng, params, trav, door_mask, cell)
        for room, rtype in zip(rooms, types):
            for item in layout["room_types"][rtype]:
                if rng.random() >= item["prob"]:
                    continue
                name = item["category"]
                rect = placer.place(cat_id[name], name, room, item["place"])
                if rect is None:
                    continue
                for rel in layout["relations"]:
                    if rel["anchor"] != name or rng.random() >= rel["prob"]:
                        continue
                    count = int(rng.integers(rel["count"][0], rel["count"][1] + 1))
                    max_gap = int(round(rel["max_gap_m"] / cell))
                    for _ in range(count):
                        placer.place_near(cat_id[rel["target"]], rel["target"], rect, room, max_gap)

        instances = [inst for inst, _ in placer.instances]
        targets_present = {i.category for i in instances if i.category < n_t}
        if len(targets_present) < min(params.min_target_categories, n_t):
            continue
        free_dist = ndimage.distance_transform_cdt(trav, metric="chessboard")
        spawn_cells = np.argwhere(free_dist > int(round(params.spawn_clearance_m / cell)))
        if len(spawn_cells) == 0:
            continue
        scene = Scene(width=W, height=H, traversable=trav, instances=instances, doors=doors,
                      spawn_cells=spawn_cells, seed=int(seed), cell_size=cell,
                      scene_id=scene_id, category_names=tuple(names))
        scene.validate()
        return scene
    raise GenerationError(f"no valid scene after {params.max_retries} attempts (seed {seed})")


# -- episodes -------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeSpec:
    scene_id: str
    start_pose: Pose
    target_category: int
    shortest_path_length: float
    max_steps: int = 500
    success_radius: float = 1.0
    episode_id: int = 0

    def __post_init__(self):
        if not math.isfinite(self.shortest_path_length):
            raise ValueError("target unreachable from start (non-finite shortest path)")
        if self.max_steps <= 0 or self.success_radius <= 0:
            raise ValueError("max_steps and success_radius must be positive")

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id, "episode_id": int(self.episode_id),
            "start_pose": self.start_pose.to_dict(),
            "target_category": int(self.target_category),
            "shortest_path_length": float(self.shortest_path_length),
            "max_steps": int(self.max_steps), "success_radius": float(self.success_radius),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeSpec":
        p = d["start_pose"]
        return cls(scene_id=d["scene_id"], start_pose=Pose(p["x"], p["y"], p["heading"]),
                   target_category=int(d["target_category"]),
                   shortest_path_length=float(d["shortest_path_length"]),
                   max_steps=int(d["max_steps"]), success_radius=float(d["success_radius"]),
                   episode_id=int(d.get("episode_id", 0)))


def save_episodes(episodes, path) -> None:
    Path(path).write_text(json.dumps([e.to_dict() for e in episodes], indent=1))


def load_episodes(path) -> list[EpisodeSpec]:
    return [EpisodeSpec.from_dict(d) for d in json.loads(Path(path).read_text())]


def sample_episode(scene: Scene, target: int, seed: int, *, margin_m: float = 2.0,
                   success_radius: float = 1.0, max_steps: int = 500,
                   episode_id: int = 0) -> EpisodeSpec:
    """Draw a start pose at least ``success_radius + margin_m`` (geodesic)
    from every instance of ``target``."""
    from .distance import target_distance  # avoid import cycle at module load

    if not len(scene.target_cells(target)):
        raise NoReachableTarget(f"category {target} absent from scene {scene.scene_id!r}")
    dist = target_distance(scene, target)
    sp = scene.spawn_cells
    d = dist[sp[:, 0], sp[:, 1]]
    ok = np.isfinite(d) & (d >= success_radius + margin_m)
    if not ok.any():
        raise NoReachableTarget(f"no spawn cell satisfies the margin for category {target}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0xE915]))
    cands = sp[ok]
    r, c = cands[int(rng.integers(len(cands)))]
    heading = float(rng.uniform(0.0, TWO_PI))
    return EpisodeSpec(scene_id=scene.scene_id, start_pose=Pose.at_cell(int(r), int(c), heading),
                       target_category=int(target),
                       shortest_path_length=float(dist[r, c]), max_steps=max_steps,
                       success_radius=success_radius, episode_id=episode_id)
