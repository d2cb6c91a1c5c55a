"""Exploration frontier and the door sector."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import Pose


@dataclass
class FrontierSet:
    mask: np.ndarray                 # bool grid in the map's frame
    door_sector: np.ndarray = None   # bool grid, subset of mask, or None

    @property
    def cells(self) -> np.ndarray:
        return np.argwhere(self.mask)

    @property
    def door_cells(self) -> np.ndarray:
        if self.door_sector is None:
            return np.zeros((0, 2), dtype=np.int64)
        return np.argwhere(self.door_sector)

    def __len__(self):
        return int(self.mask.sum())

    @classmethod
    def from_cells(cls, cells, shape) -> "FrontierSet":
        mask = np.zeros(shape, dtype=bool)
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        if len(cells):
            mask[cells[:, 0], cells[:, 1]] = True
        return cls(mask)


def _neighbor_any(mask: np.ndarray, connectivity: int) -> np.ndarray:
    """True where some in-bounds neighbor is set."""
    h, w = mask.shape
    p = np.zeros((h + 2, w + 2), dtype=bool)
    p[1:-1, 1:-1] = mask
    out = p[:-2, 1:-1] | p[2:, 1:-1] | p[1:-1, :-2] | p[1:-1, 2:]
    if connectivity == 8:
        out |= p[:-2, :-2] | p[:-2, 2:] | p[2:, :-2] | p[2:, 2:]
    return out


def extract_frontier(grid, connectivity: int = 8) -> FrontierSet:
    """Explored free cells with at least one unexplored neighbor. Cells off
    the grid never count as unexplored."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    explored = grid.explored
    free = explored & ~grid.obstacle
    return FrontierSet(free & _neighbor_any(~explored, connectivity))


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def bearings(cells: np.ndarray, pose: Pose, origin=(0, 0)) -> np.ndarray:
    """World bearing from the pose to each cell center (same convention as
    heading)."""
    rows = cells[:, 0] + origin[0] + 0.5
    cols = cells[:, 1] + origin[1] + 0.5
    return np.arctan2(-(rows - pose.y), cols - pose.x)


def door_sector(frontier: FrontierSet, pose: Pose, door_bearing: float,
                theta_d: float = math.radians(120), origin=(0, 0)) -> FrontierSet:
    """Frontier cells inside the sector of angle ``theta_d`` centered on the
    agent heading. Empty when the door bearing falls outside that sector."""
    if not 0 < theta_d < 2 * math.pi:
        raise ValueError("theta_d must be in (0, 2*pi)")
    half = theta_d / 2
    sector = np.zeros_like(frontier.mask)
    if door_bearing is not None and abs(_wrap(door_bearing - pose.heading)) <= half + 1e-9:
        cells = frontier.cells
        if len(cells):
            diff = np.abs(_wrap(bearings(cells, pose, origin) - pose.heading))
            keep = cells[diff <= half + 1e-9]
            sector[keep[:, 0], keep[:, 1]] = True
    return FrontierSet(frontier.mask, sector)
