import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from distnav.frontier import FrontierSet, bearings, door_sector, extract_frontier
from distnav.scene import Pose
from distnav.sensing import SemanticGrid


def _grid(explored, obstacle=None, n_cat=3):
    h, w = explored.shape
    g = SemanticGrid.empty(n_cat, h, w)
    g.channels[1] = explored
    if obstacle is not None:
        g.channels[0] = obstacle & explored
    return g


def frontier_oracle(g):
    h, w = g.shape
    out = np.zeros((h, w), bool)
    for r in range(h):
        for c in range(w):
            if not g.explored[r, c] or g.obstacle[r, c]:
                continue
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if (dr or dc) and 0 <= rr < h and 0 <= cc < w and not g.explored[rr, cc]:
                        out[r, c] = True
    return out


def test_fully_explored_empty():
    assert len(extract_frontier(_grid(np.ones((10, 10), bool)))) == 0


def test_half_explored_boundary_line():
    e = np.zeros((10, 12), bool)
    e[:, :6] = True
    f = extract_frontier(_grid(e))
    expect = np.zeros_like(e)
    expect[:, 5] = True
    assert np.array_equal(f.mask, expect)


def test_wall_cells_excluded_matches_oracle():
    rng = np.random.default_rng(3)
    e = np.zeros((30, 30), bool)
    e[5:20, 3:25] = True
    obst = np.zeros_like(e)
    obst[5:20, 12] = True
    obst[rng.integers(0, 30, 40), rng.integers(0, 30, 40)] = True
    g = _grid(e, obst)
    f = extract_frontier(g)
    assert np.array_equal(f.mask, frontier_oracle(g))
    assert not (f.mask & g.obstacle).any()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_frontier_invariants_and_channel_relabeling(seed):
    rng = np.random.default_rng(seed)
    e = rng.random((20, 20)) < 0.6
    o = rng.random((20, 20)) < 0.2
    g = _grid(e, o)
    g.channels[2:] = (rng.random((3, 20, 20)) < 0.1) & e
    f = extract_frontier(g)
    assert np.array_equal(f.mask, frontier_oracle(g))
    g2 = g.copy()
    g2.channels[2:] = g.channels[2:][::-1]
    assert np.array_equal(extract_frontier(g2).mask, f.mask)
    assert not (f.mask & g.obstacle).any()


def test_4_connectivity_is_subset():
    rng = np.random.default_rng(0)
    g = _grid(rng.random((25, 25)) < 0.5)
    assert not (extract_frontier(g, 4).mask & ~extract_frontier(g, 8).mask).any()


def _fan():
    """Frontier cells on a half circle at bearings -90..+90 degrees from an
    agent at (50, 50) facing +col."""
    cells = []
    for deg in range(-90, 91, 5):
        a = math.radians(deg)
        cells.append((int(round(50 - 30 * math.sin(a) - 0.5)), int(round(50 + 30 * math.cos(a) - 0.5))))
    return FrontierSet.from_cells(cells, (101, 101)), Pose(50.0, 50.0, 0.0)


def test_fan_sector_keeps_within_60_degrees():
    f, pose = _fan()
    ds = door_sector(f, pose, 0.0, math.radians(120))
    cells = f.cells
    ang = np.degrees(np.abs(bearings(cells, pose)))
    expect = set(map(tuple, cells[ang <= 60 + 1e-9]))
    assert set(map(tuple, ds.door_cells)) == expect
    assert not (ds.door_sector & ~ds.mask).any()


def test_behind_excluded_and_near_full_sector():
    f = FrontierSet.from_cells([(49, 20), (50, 80), (20, 50)], (101, 101))
    pose = Pose(50.5, 50.5, 0.0)
    ds = door_sector(f, pose, 0.0, math.radians(120))
    assert ds.door_sector[50, 80] and not ds.door_sector[49, 20]
    full = door_sector(f, pose, 0.0, 2 * math.pi - 1e-6)
    assert np.array_equal(full.door_sector, f.mask)


def test_door_outside_sector_gives_empty():
    f, pose = _fan()
    ds = door_sector(f, pose, math.pi, math.radians(120))
    assert not ds.door_sector.any()
    assert not door_sector(f, pose, None).door_sector.any()


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 6.0), st.floats(0.1, 6.0), st.floats(0, 2 * math.pi))
def test_sector_monotone_in_angle(a, b, heading):
    lo, hi = sorted((a, b))
    rng = np.random.default_rng(0)
    m = rng.random((60, 60)) < 0.2
    f = FrontierSet(m)
    pose = Pose(30.2, 29.7, heading)
    s_lo = door_sector(f, pose, heading, lo).door_sector
    s_hi = door_sector(f, pose, heading, hi).door_sector
    assert not (s_lo & ~s_hi).any()
