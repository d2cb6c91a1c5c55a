import math

import numpy as np
import pytest
from conftest import box_scene
from hypothesis import given, settings
from hypothesis import strategies as st

from distnav.scene import Action, Pose, generate_scene, preset, step
from distnav.sensing import (
    GLOBAL_SIZE,
    LOCAL_SIZE,
    NoiseConfig,
    SemanticGrid,
    SensorConfig,
    crop_local,
    dump_channels,
    load_channels,
    read_ppm,
    render_map,
    sense,
    update_map,
    write_ppm,
)

FULL = SensorConfig(fov_deg=360.0, range_m=10.0, rays_per_degree=4)


def march_oracle(blocked, x0, y0, angle, max_range, h=1e-3):
    """Visible cells of one ray by fine sampling."""
    out = set()
    dx, dy = math.cos(angle), -math.sin(angle)
    t = 0.0
    while t <= max_range:
        c, r = int(math.floor(x0 + t * dx)), int(math.floor(y0 + t * dy))
        if not (0 <= r < blocked.shape[0] and 0 <= c < blocked.shape[1]):
            break
        out.add((r, c))
        if blocked[r, c]:
            break
        t += h
    return out


def test_empty_room_fully_visible_walls_as_obstacles():
    sc = box_scene(30, 30)
    obs = sense(sc, Pose(15.5, 15.5, 0.0), FULL)
    vis = np.zeros((30, 30), bool)
    vis[obs.rows, obs.cols] = True
    # the four wall corners are hidden behind their neighbors
    expect = np.ones((30, 30), bool)
    expect[[0, 0, -1, -1], [0, -1, 0, -1]] = False
    assert np.array_equal(vis, expect)
    assert np.array_equal(obs.is_obstacle, ~sc.traversable[obs.rows, obs.cols])


def test_occlusion_behind_obstacle():
    walls = [(r, 25) for r in range(12, 19)]
    sc = box_scene(30, 45, walls=walls)
    obs = sense(sc, Pose(5.5, 15.5, 0.0), SensorConfig(range_m=2.0))
    vis = set(zip(obs.rows.tolist(), obs.cols.tolist()))
    assert (15, 25) in vis          # the blocker itself is seen
    assert (15, 26) not in vis and (15, 30) not in vis


def test_rays_match_march_oracle(desk_scene):
    sc = desk_scene
    blocked = ~sc.traversable
    rng = np.random.default_rng(0)
    r, c = sc.spawn_cells[len(sc.spawn_cells) // 3]
    x0, y0 = c + 0.37, r + 0.61
    for a in rng.uniform(0, 2 * math.pi, 40):
        obs = sense(sc, Pose(x0, y0, a), SensorConfig(fov_deg=0.0, range_m=5.0))
        got = set(zip(obs.rows.tolist(), obs.cols.tolist()))
        assert got == march_oracle(blocked, x0, y0, a, 100.0)


def test_visible_within_range_and_fov(desk_scene):
    cfg = SensorConfig()
    r, c = desk_scene.spawn_cells[0]
    pose = Pose(c + 0.5, r + 0.5, 1.0)
    obs = sense(desk_scene, pose, cfg)
    # every visible cell has a point within range and inside the field of view
    for rr, cc in zip(obs.rows, obs.cols):
        ys, xs = np.meshgrid([rr, rr + 1], [cc, cc + 1])
        d = np.hypot(xs - pose.x, ys - pose.y).min()
        assert d <= cfg.range_m / desk_scene.cell_size + 1e-9


def test_facing_door_sets_bearing():
    sc = box_scene(30, 40, walls=[(r, 20) for r in range(1, 29) if not 13 <= r <= 16],
                   doors=[[(r, 20) for r in range(13, 17)]])
    pose = Pose(10.5, 15.5, 0.0)
    obs = sense(sc, pose, SensorConfig())
    assert obs.door_visible
    vis = [(r, c) for r, c in zip(obs.rows, obs.cols) if sc.door_mask[r, c]]
    d = [math.hypot(c + 0.5 - pose.x, r + 0.5 - pose.y) for r, c in vis]
    r, c = vis[int(np.argmin(d))]
    assert obs.door_bearing == pytest.approx(math.atan2(-(r + 0.5 - pose.y), c + 0.5 - pose.x) % (2 * math.pi))
    assert abs(obs.door_bearing - (2 * math.pi if obs.door_bearing > math.pi else 0)) < 0.2
    back = sense(sc, Pose(10.5, 15.5, math.pi), SensorConfig())
    assert not back.door_visible and back.door_bearing is None


def test_first_update_marks_exactly_observed():
    sc = box_scene(30, 30)
    obs = sense(sc, Pose(15.5, 15.5, 0.0), SensorConfig(range_m=0.4))
    g = SemanticGrid.empty(12, 30, 30)
    update_map(g, obs)
    assert g.explored.sum() == len(set(zip(obs.rows.tolist(), obs.cols.tolist())))


def test_two_updates_union():
    sc = box_scene(30, 30)
    o1 = sense(sc, Pose(15.5, 15.5, 0.0))
    o2 = sense(sc, Pose(15.5, 15.5, math.pi))
    g = SemanticGrid.empty(12, 30, 30)
    update_map(g, o1)
    update_map(g, o2)
    u = np.zeros((30, 30), bool)
    u[o1.rows, o1.cols] = True
    u[o2.rows, o2.cols] = True
    assert np.array_equal(g.explored, u)


def test_p_miss_one_sets_no_semantics():
    sc = box_scene(30, 30, instances=[(2, [(10, 18), (10, 19)])])
    obs = sense(sc, Pose(15.5, 15.5, math.pi / 2), FULL)
    g = SemanticGrid.empty(12, 30, 30)
    update_map(g, obs, noise=NoiseConfig(p_miss=1.0), rng=np.random.default_rng(0))
    assert not g.semantics.any() and g.explored.any() and g.obstacle.any()
    with pytest.raises(ValueError):
        update_map(g, obs, noise=NoiseConfig(p_miss=0.5))


def test_semantic_implies_explored_with_noise():
    sc = generate_scene(preset("desk"), 2)
    r, c = sc.spawn_cells[0]
    g = SemanticGrid.empty(12, sc.height, sc.width)
    rng = np.random.default_rng(1)
    for h in np.linspace(0, 2 * math.pi, 8, endpoint=False):
        update_map(g, sense(sc, Pose(c + 0.5, r + 0.5, h)), noise=NoiseConfig(p_sem=0.5, p_miss=0.2), rng=rng)
    assert not (g.semantics.any(axis=0) & ~g.explored).any()


def test_crop_local_centered():
    g = SemanticGrid.empty(2)
    lc = crop_local(g, Pose(240.5, 240.5, 0.0))
    assert lc.shape == (LOCAL_SIZE, LOCAL_SIZE) and lc.origin == (120, 120)
    assert g.shape == (GLOBAL_SIZE, GLOBAL_SIZE)


def test_crop_local_corner_padding_and_round_trip():
    g = SemanticGrid.empty(2)
    g.channels[1, 0:5, 0:5] = True
    g.channels[0, 3, 4] = True
    lc = crop_local(g, Pose(2.5, 2.5, 0.0))
    assert lc.origin == (-118, -118)
    assert not lc.channels[:, :118, :].any() and not lc.channels[:, :, :118].any()
    lr, lcc = lc.to_local(3, 4)
    assert lc.obstacle[lr, lcc] and lc.to_global(lr, lcc) == (3, 4)


def test_ppm_and_dump_round_trip(tmp_path, desk_scene):
    g = SemanticGrid.empty(12, 50, 60)
    g.channels[1, 10:20, 10:40] = True
    g.channels[0, 12, 12] = True
    g.channels[5, 15, 15] = True
    img = render_map(g)
    write_ppm(tmp_path / "m.ppm", img, "fp")
    assert np.array_equal(read_ppm(tmp_path / "m.ppm"), img)
    assert b"# fp" in (tmp_path / "m.ppm").read_bytes()
    assert (img[0, 0] == 128).all() and (img[12, 12] == 0).all() and (img[11, 11] == 255).all()
    dump_channels(tmp_path / "m.bin", g)
    assert np.array_equal(load_channels(tmp_path / "m.bin").channels, g.channels)


def test_visibility_symmetric_on_empty_grid():
    sc = box_scene(40, 40)
    cfg = SensorConfig(fov_deg=360.0, range_m=0.6, rays_per_degree=8)
    a, b = (20, 20), (25, 28)
    va = sense(sc, Pose(a[1] + 0.5, a[0] + 0.5, 0), cfg)
    vb = sense(sc, Pose(b[1] + 0.5, b[0] + 0.5, 0), cfg)
    sa = set(zip(va.rows.tolist(), va.cols.tolist()))
    sb = set(zip(vb.rows.tolist(), vb.cols.tolist()))
    assert (b in sa) == (a in sb)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 9), st.integers(0, 2 ** 31 - 1))
def test_random_walk_monotone_and_sound(scene_seed, walk_seed):
    sc = generate_scene(preset("small"), scene_seed)
    rng = np.random.default_rng(walk_seed)
    r, c = sc.spawn_cells[int(rng.integers(len(sc.spawn_cells)))]
    pose = Pose.at_cell(int(r), int(c), float(rng.uniform(0, 2 * math.pi)))
    g = SemanticGrid.empty(12, sc.height, sc.width)
    prev = g.explored.copy()
    for _ in range(25):
        update_map(g, sense(sc, pose), pose)
        assert (g.explored >= prev).all()
        prev = g.explored.copy()
        pose, _ = step(sc, pose, Action(int(rng.integers(1, 4))))
    assert (sc.traversable[g.obstacle] == False).all()
    cat = sc.category_grid
    for k in range(12):
        assert (cat[g.semantic(k)] == k).all()
