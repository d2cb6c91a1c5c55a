import math

import numpy as np
import pytest
from conftest import box_scene, dijkstra_oracle
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from distnav.distance import target_distance
from distnav.scene import (
    Action,
    EpisodeSpec,
    GenerationError,
    GeneratorConfig,
    Kinematics,
    NoReachableTarget,
    Pose,
    Scene,
    generate_scene,
    load_episodes,
    preset,
    sample_episode,
    save_episodes,
    step,
)


def test_one_room_traversable_is_rectangle_minus_objects():
    sc = generate_scene(preset("one_room"), 0)
    sc.validate()
    assert len(sc.doors) == 0
    t = sc.traversable.copy()
    t[sc.category_grid >= 0] = True
    rows, cols = np.nonzero(t)
    box = np.zeros_like(t)
    box[rows.min():rows.max() + 1, cols.min():cols.max() + 1] = True
    assert (t == box).all()


def test_same_seed_same_scene_bytes():
    a = generate_scene(preset("desk"), 11, "x")
    b = generate_scene(preset("desk"), 11, "x")
    assert a.to_json() == b.to_json()
    assert a.to_json() != generate_scene(preset("desk"), 12, "x").to_json()


def test_four_room_seed7_connected_by_flood_fill():
    sc = generate_scene(preset("four_room"), 7)
    sc.validate()
    r, c = sc.spawn_cells[0]
    seen = np.zeros_like(sc.traversable)
    stack = [(int(r), int(c))]
    seen[r, c] = True
    while stack:
        r, c = stack.pop()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < sc.height and 0 <= cc < sc.width and sc.traversable[rr, cc] and not seen[rr, cc]:
                seen[rr, cc] = True
                stack.append((rr, cc))
    assert (seen == sc.traversable).all()
    assert len(sc.doors) >= 3


@pytest.mark.parametrize("seed", range(8))
def test_generated_scene_invariants(seed):
    sc = generate_scene(preset("desk"), seed)
    sc.validate()
    cats = sc.categories_present()
    assert len([c for c in cats if c < 6]) >= 3
    assert sc.traversable[sc.spawn_cells[:, 0], sc.spawn_cells[:, 1]].all()
    # doors join two regions that are disconnected without them
    if sc.doors:
        closed = sc.traversable & ~sc.door_mask
        _, n = ndimage.label(closed)
        assert n >= 2
    assert not sc.traversable.flags.writeable


def test_min_room_size_enforced():
    with pytest.raises(ValueError):
        GeneratorConfig(min_room_m=1.5)


def test_infeasible_params_fail_after_retries():
    with pytest.raises(GenerationError):
        generate_scene(preset("small", min_target_categories=12, max_retries=3), 0)


def test_scene_json_round_trip(desk_scene):
    back = Scene.from_json(desk_scene.to_json())
    assert back.to_json() == desk_scene.to_json()
    d = desk_scene.to_dict()
    assert set(d) >= {"width", "height", "cell_size_m", "traversable", "instances", "doors",
                      "spawn_cells", "seed"}


def test_episode_open_space_distance():
    sc = box_scene(100, 40, instances=[(0, [(10, 20)])])
    sc2 = box_scene(100, 40, instances=[(0, [(10, 20)])], spawn=[(70, 20)])
    ep = sample_episode(sc2, 0, 0, margin_m=1.0)
    # target 60 cells straight down, start adjacent cell counts: 59 axial moves
    oracle = dijkstra_oracle(sc.traversable, np.array([[10, 20]])) * sc.cell_size
    assert ep.shortest_path_length == pytest.approx(oracle[70, 20], abs=0)
    assert ep.shortest_path_length == pytest.approx(3.0, abs=math.sqrt(2) * 0.05)


def test_episode_absent_target_raises():
    sc = box_scene(30, 30, instances=[(0, [(5, 5)])])
    with pytest.raises(NoReachableTarget):
        sample_episode(sc, 3, 0)


def test_episode_two_seeds_distinct_and_margin(desk_scene):
    t = desk_scene.categories_present()[0]
    a = sample_episode(desk_scene, t, 1)
    b = sample_episode(desk_scene, t, 2)
    assert a.start_pose != b.start_pose
    for e in (a, b):
        assert e.shortest_path_length >= e.success_radius + 2.0
        assert e.max_steps == 500 and e.success_radius == 1.0


def test_episode_length_matches_geodesic(desk_scenes):
    for sc in desk_scenes:
        for t in sc.categories_present()[:3]:
            ep = sample_episode(sc, t, 5)
            r, c = ep.start_pose.cell
            assert ep.shortest_path_length == target_distance(sc, t)[r, c]


def test_episode_spec_rejects_unreachable():
    with pytest.raises(ValueError):
        EpisodeSpec("s", Pose(1.5, 1.5, 0), 0, math.inf)


def test_episodes_json_round_trip(tmp_path, desk_scene):
    eps = [sample_episode(desk_scene, t, 3, episode_id=i)
           for i, t in enumerate(desk_scene.categories_present()[:3])]
    save_episodes(eps, tmp_path / "e.json")
    assert load_episodes(tmp_path / "e.json") == eps


def test_step_blocked_by_wall():
    sc = box_scene(20, 20)
    pose = Pose(16.5, 10.5, 0.0)  # wall at col 19, 2.5 cells (12.5 cm) ahead
    new, hit = step(sc, pose, Action.MOVE_FORWARD)
    assert hit and new == pose


def test_step_turn_exact():
    sc = box_scene(20, 20)
    new, hit = step(sc, Pose(10.5, 10.5, 0.0), Action.TURN_LEFT)
    assert not hit and new.heading == pytest.approx(math.pi / 6, abs=1e-15)
    new, _ = step(sc, Pose(10.5, 10.5, 0.0), Action.TURN_RIGHT)
    assert new.heading == pytest.approx(2 * math.pi - math.pi / 6, abs=1e-12)


def test_step_forward_displacement():
    sc = box_scene(30, 30)
    p = Pose(10.5, 15.5, math.pi / 3)
    new, hit = step(sc, p, Action.MOVE_FORWARD)
    assert not hit
    assert math.hypot(new.x - p.x, new.y - p.y) * sc.cell_size == pytest.approx(0.25)
    assert new.x > p.x and new.y < p.y  # counterclockwise heading, row axis points down


def test_stop_is_identity():
    sc = box_scene(20, 20)
    p = Pose(5.5, 5.5, 1.0)
    assert step(sc, p, Action.STOP) == (p, False)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 3), st.lists(st.sampled_from(list(Action)), min_size=1, max_size=60))
def test_step_never_enters_obstacle(seed, actions):
    sc = generate_scene(preset("small"), seed)
    r, c = sc.spawn_cells[len(sc.spawn_cells) // 2]
    pose = Pose.at_cell(int(r), int(c), 0.3)
    kin = Kinematics()
    for a in actions:
        pose, _ = step(sc, pose, a, kin)
        rr, cc = pose.cell
        assert sc.traversable[rr, cc]


def test_trajectory_deterministic(desk_scene):
    from distnav.harness import run_episode
    from distnav.policy import make_policy
    from distnav.predictor import OraclePredictor
    t = desk_scene.categories_present()[0]
    ep = sample_episode(desk_scene, t, 9, max_steps=60)
    recs = [run_episode(desk_scene, ep, make_policy("cf"), OraclePredictor(), seed=4) for _ in range(2)]
    assert recs[0].actions == recs[1].actions
    assert recs[0].trajectory == recs[1].trajectory
