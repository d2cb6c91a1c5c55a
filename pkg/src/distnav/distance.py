"""Geodesic target-distance fields, their bin discretization, and the
frontier-band mask."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scene import CELL_SIZE_M

DEFAULT_PARTITION = (1.0, 2.0, 4.0, 8.0, math.inf)
# per-bin loss weights, nearest bin heaviest
DEFAULT_BIN_WEIGHTS = (5.0, 4.0, 3.0, 2.0, 1.0)
UNKNOWN = -1


def check_partition(partition) -> tuple:
    p = tuple(float(x) for x in partition)
    if len(p) < 2 or not math.isinf(p[-1]):
        raise ValueError(f"partition must end with inf: {partition}")
    if any(b <= a for a, b in zip(p, p[1:])) or p[0] <= 0:
        raise ValueError(f"partition must be positive and strictly ascending: {partition}")
    return p


def bin_labels(partition) -> list[str]:
    p = check_partition(partition)
    labels = [f"<{p[0]:g}m"]
    labels += [f"{a:g}-{b:g}m" for a, b in zip(p, p[1:-1])]
    labels.append(f">{p[-2]:g}m")
    return labels


def to_bins(distances, partition) -> np.ndarray:
    """Index of the first threshold strictly greater than the distance;
    +inf lands in the last bin."""
    p = np.asarray(check_partition(partition))
    d = np.asarray(distances, dtype=float)
    bins = np.searchsorted(p, d, side="right")
    return np.minimum(bins, len(p) - 1).astype(np.int8)


def _as_mask(cells, shape) -> np.ndarray:
    cells = np.asarray(cells)
    if cells.dtype == bool and cells.shape == shape:
        return cells
    mask = np.zeros(shape, dtype=bool)
    cells = cells.reshape(-1, 2).astype(np.int64)
    if len(cells):
        mask[cells[:, 0], cells[:, 1]] = True
    return mask


def geodesic_cells(passable, sources, *, stop=None, max_cells=math.inf) -> np.ndarray:
    """Octile geodesic in cell units from a source mask (sources are always
    passable). Optional early stop once every ``stop`` cell is settled."""
    passable = np.ascontiguousarray(passable, dtype=bool)
    src = _as_mask(sources, passable.shape)
    sr, sc = np.nonzero(src)
    if len(sr) == 0:
        raise ValueError("empty source set")
    grid = passable | src
    if stop is None:
        stop_mask = np.zeros((1, 1), dtype=bool)
        n_stop = 0
    else:
        stop_mask = np.ascontiguousarray(stop & grid)
        n_stop = int(stop_mask.sum())
        if n_stop == 0:
            stop_mask = np.zeros((1, 1), dtype=bool)
    return _kernels.dijkstra8(grid, sr.astype(np.int64), sc.astype(np.int64),
                              stop_mask, n_stop, float(max_cells))


def compute_geodesic(traversable, sources, cell_size: float = CELL_SIZE_M) -> np.ndarray:
    """Multi-source shortest path length in meters on the 8-connected grid.

    Axial steps cost one cell, diagonal steps sqrt(2) cells, and a diagonal
    step is only allowed when both cells it squeezes between are free.
    Unreachable cells are +inf, sources are 0.
    """
    return geodesic_cells(traversable, sources) * cell_size


@dataclass(frozen=True)
class DistanceField:
    distances: np.ndarray   # meters, +inf where unreachable
    bins: np.ndarray        # int8, UNKNOWN (-1) where undefined
    partition: tuple
    target_category: int

    @property
    def n_bins(self) -> int:
        return len(self.partition)

    def crop(self, origin, size) -> np.ndarray:
        """Bin window at ``origin`` (global row, col); outside cells UNKNOWN."""
        return crop_window(self.bins, origin, size, fill=UNKNOWN)


def crop_window(grid, origin, size, fill=0):
    """Extract ``grid[r0:r0+h, c0:c0+w]`` padding out-of-range with ``fill``.
    Works on trailing two axes."""
    h, w = (size, size) if np.isscalar(size) else size
    r0, c0 = origin
    H, W = grid.shape[-2:]
    out = np.full(grid.shape[:-2] + (h, w), fill, dtype=grid.dtype)
    gr0, gc0 = max(r0, 0), max(c0, 0)
    gr1, gc1 = min(r0 + h, H), min(c0 + w, W)
    if gr1 > gr0 and gc1 > gc0:
        out[..., gr0 - r0:gr1 - r0, gc0 - c0:gc1 - c0] = grid[..., gr0:gr1, gc0:gc1]
    return out


def target_distance(scene, target: int) -> np.ndarray:
    """Ground-truth geodesic (meters) to the nearest instance of ``target``.

    Target cells are sources even though furniture is not traversable; the
    distance then flows into adjacent free cells only. Cached per scene.
    """
    cache = scene.__dict__.setdefault("_target_distance_cache", {})
    if target not in cache:
        cells = scene.target_cells(target)
        if len(cells) == 0:
            d = np.full((scene.height, scene.width), np.inf)
        else:
            d = compute_geodesic(scene.traversable, cells, scene.cell_size)
        d.flags.writeable = False
        cache[target] = d
    return cache[target]


def build_gt_field(scene, target: int, partition=DEFAULT_PARTITION) -> DistanceField:
    """Ground-truth target distance map and its bins for one category.
    An absent target gives an all-inf field."""
    partition = check_partition(partition)
    d = target_distance(scene, target)
    return DistanceField(distances=d, bins=to_bins(d, partition), partition=partition,
                         target_category=int(target))


def frontier_band_mask(grid, frontier, band_width: float = 1.0) -> np.ndarray:
    """Non-obstacle cells within ``band_width`` meters (Chebyshev hops along
    free cells) of any frontier cell."""
    if band_width <= 0:
        raise ValueError("band_width must be positive")
    mask = frontier.mask
    if not mask.any():
        return np.zeros_like(mask)
    steps = int(math.floor(band_width / grid.cell_size + 1e-9))
    passable = ~grid.obstacle
    hops = _kernels.chebyshev_bfs(np.ascontiguousarray(passable), np.ascontiguousarray(mask), steps)
    return hops >= 0
