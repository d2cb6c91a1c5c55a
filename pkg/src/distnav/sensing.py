"""Simulated semantic sensing and the k-channel bird's-eye semantic map."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .distance import crop_window
from .scene import CELL_SIZE_M, Pose, Scene

OBSTACLE, EXPLORED = 0, 1
SEM0 = 2  # first semantic channel
GLOBAL_SIZE = 480
LOCAL_SIZE = 240


@dataclass
class SemanticGrid:
    """Channels: 0 obstacle, 1 explored, 2.. one per semantic category.

    ``origin`` is the global (row, col) of local cell (0, 0); it is (0, 0) for
    the global map.
    """
    channels: np.ndarray
    origin: tuple = (0, 0)
    cell_size: float = CELL_SIZE_M

    @classmethod
    def empty(cls, n_categories: int, height: int = GLOBAL_SIZE, width: int = GLOBAL_SIZE,
              cell_size: float = CELL_SIZE_M) -> "SemanticGrid":
        return cls(np.zeros((n_categories + 2, height, width), dtype=bool), (0, 0), cell_size)

    @property
    def k(self) -> int:
        return self.channels.shape[0]

    @property
    def n_categories(self) -> int:
        return self.k - 2

    @property
    def shape(self) -> tuple:
        return self.channels.shape[1:]

    @property
    def obstacle(self) -> np.ndarray:
        return self.channels[OBSTACLE]

    @property
    def explored(self) -> np.ndarray:
        return self.channels[EXPLORED]

    def semantic(self, category: int) -> np.ndarray:
        return self.channels[SEM0 + category]

    @property
    def semantics(self) -> np.ndarray:
        return self.channels[SEM0:]

    def to_local(self, row: int, col: int) -> tuple:
        return row - self.origin[0], col - self.origin[1]

    def to_global(self, row: int, col: int) -> tuple:
        return row + self.origin[0], col + self.origin[1]

    def pose_cell(self, pose: Pose) -> tuple:
        r, c = pose.cell
        return self.to_local(r, c)

    def copy(self) -> "SemanticGrid":
        return SemanticGrid(self.channels.copy(), tuple(self.origin), self.cell_size)


@dataclass(frozen=True)
class SensorConfig:
    fov_deg: float = 90.0
    range_m: float = 5.0
    rays_per_degree: float = 1.0

    def angles(self, heading: float) -> np.ndarray:
        if self.fov_deg >= 360.0:
            n = max(1, int(round(360.0 * self.rays_per_degree)))
            return heading + np.arange(n) * (2 * math.pi / n)
        n = max(1, int(round(self.fov_deg * self.rays_per_degree))) + 1
        half = math.radians(self.fov_deg) / 2
        return heading + np.linspace(-half, half, n)


@dataclass(frozen=True)
class NoiseConfig:
    p_sem: float = 0.0   # label replaced by a random other category
    p_miss: float = 0.0  # detection dropped

    @property
    def is_zero(self) -> bool:
        return self.p_sem == 0.0 and self.p_miss == 0.0


@dataclass
class Observation:
    rows: np.ndarray
    cols: np.ndarray
    is_obstacle: np.ndarray
    category: np.ndarray  # -1 where no semantic label
    door_visible: bool = False
    door_bearing: float | None = None

    @property
    def visible_cells(self) -> set:
        return {(int(r), int(c), bool(o), None if k < 0 else int(k))
                for r, c, o, k in zip(self.rows, self.cols, self.is_obstacle, self.category)}

    def __len__(self):
        return len(self.rows)


def sense(scene: Scene, pose: Pose, cfg: SensorConfig = SensorConfig()) -> Observation:
    """Cast rays from the pose across the field of view. Obstacles stop a
    ray and are themselves visible."""
    visible = np.zeros((scene.height, scene.width), dtype=bool)
    blocked = ~scene.traversable
    _kernels.cast_rays(blocked, float(pose.x), float(pose.y), cfg.angles(pose.heading),
                       cfg.range_m / scene.cell_size, visible)
    rows, cols = np.nonzero(visible)
    category = scene.category_grid[rows, cols].astype(np.int64)
    is_obstacle = blocked[rows, cols]
    door = scene.door_mask[rows, cols]
    door_visible = bool(door.any())
    bearing = None
    if door_visible:
        dr = rows[door] + 0.5 - pose.y
        dc = cols[door] + 0.5 - pose.x
        i = int(np.argmin(dr * dr + dc * dc))
        bearing = math.atan2(-dr[i], dc[i]) % (2 * math.pi)
    return Observation(rows, cols, is_obstacle, category, door_visible, bearing)


def update_map(grid: SemanticGrid, obs: Observation, pose: Pose = None,
               noise: NoiseConfig = NoiseConfig(), rng: np.random.Generator = None) -> SemanticGrid:
    """Accumulate an observation into the map in place (and return it).
    Channels are only ever set, never cleared."""
    r = obs.rows - grid.origin[0]
    c = obs.cols - grid.origin[1]
    h, w = grid.shape
    keep = (r >= 0) & (r < h) & (c >= 0) & (c < w)
    r, c = r[keep], c[keep]
    cat = obs.category[keep]
    grid.channels[EXPLORED, r, c] = True
    obst = obs.is_obstacle[keep]
    grid.channels[OBSTACLE, r[obst], c[obst]] = True
    labelled = cat >= 0
    if not noise.is_zero:
        if rng is None:
            raise ValueError("a noisy map update needs an rng")
        n_cat = grid.n_categories
        u = rng.random(len(cat))
        miss = labelled & (u < noise.p_miss)
        flip = labelled & ~miss & (rng.random(len(cat)) < noise.p_sem)
        if flip.any() and n_cat > 1:
            shift = rng.integers(1, n_cat, size=int(flip.sum()))
            cat = cat.copy()
            cat[flip] = (cat[flip] + shift) % n_cat
        labelled &= ~miss
    grid.channels[SEM0 + cat[labelled], r[labelled], c[labelled]] = True
    return grid


def crop_local(grid: SemanticGrid, pose: Pose, size: int = LOCAL_SIZE) -> SemanticGrid:
    """Agent-centered ``size`` x ``size`` window, zero padded past the edges."""
    r, c = pose.cell
    gr, gc = r - grid.origin[0], c - grid.origin[1]
    origin = (gr - size // 2, gc - size // 2)
    chans = crop_window(grid.channels, origin, size, fill=False)
    return SemanticGrid(chans, (origin[0] + grid.origin[0], origin[1] + grid.origin[1]), grid.cell_size)


# -- snapshot export ----------------------------------------------------

_CATEGORY_COLORS = np.array([
    [230, 25, 75], [60, 180, 75], [0, 130, 200], [245, 130, 48], [145, 30, 180],
    [70, 240, 240], [240, 50, 230], [210, 245, 60], [250, 190, 190], [0, 128, 128],
    [170, 110, 40], [128, 0, 0], [170, 255, 195], [128, 128, 0], [255, 215, 180],
    [0, 0, 128], [255, 225, 25], [220, 190, 255],
], dtype=np.uint8)
FRONTIER_COLOR = np.array([40, 90, 255], dtype=np.uint8)
AGENT_COLOR = np.array([255, 0, 0], dtype=np.uint8)


def category_color(category: int) -> np.ndarray:
    return _CATEGORY_COLORS[category % len(_CATEGORY_COLORS)]


def render_map(grid: SemanticGrid, frontier_mask=None, agent_cell=None) -> np.ndarray:
    """RGB image: unexplored gray, explored white, obstacles black, each
    category its own color; optional frontier overlay and agent marker."""
    h, w = grid.shape
    img = np.full((h, w, 3), 128, dtype=np.uint8)
    img[grid.explored] = 255
    img[grid.obstacle] = 0
    for c in range(grid.n_categories):
        img[grid.semantic(c)] = category_color(c)
    if frontier_mask is not None:
        img[frontier_mask] = FRONTIER_COLOR
    if agent_cell is not None:
        r, c = agent_cell
        img[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2] = AGENT_COLOR
    return img


def write_ppm(path, rgb: np.ndarray, comment: str = "") -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    header = b"P6\n"
    if comment:
        header += b"# " + comment.replace("\n", " ").encode() + b"\n"
    header += f"{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end]
        pos = end + 1
        if line.startswith(b"#"):
            continue
        tokens += line.split()
    if tokens[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data[pos:pos + w * h * 3], dtype=np.uint8).reshape(h, w, 3)


_DUMP_HEADER = struct.Struct("<III")


def dump_channels(path, grid: SemanticGrid) -> None:
    """Raw dump: little-endian uint32 width, height, k, then k*h*w uint8
    row-major."""
    h, w = grid.shape
    Path(path).write_bytes(_DUMP_HEADER.pack(w, h, grid.k) + grid.channels.astype(np.uint8).tobytes())


def load_channels(path) -> SemanticGrid:
    data = Path(path).read_bytes()
    w, h, k = _DUMP_HEADER.unpack_from(data)
    arr = np.frombuffer(data, dtype=np.uint8, offset=_DUMP_HEADER.size, count=k * h * w)
    return SemanticGrid(arr.reshape(k, h, w).astype(bool))
