import math

import numpy as np
import pytest
from conftest import box_scene, dijkstra_oracle
from hypothesis import given, settings
from hypothesis import strategies as st

from distnav.distance import target_distance
from distnav.harness import (
    STOPPED_FAILURE,
    STOPPED_SUCCESS,
    TIMEOUT,
    BenchConfig,
    EpisodeRecord,
    aggregate,
    compute_spl,
    episode_rng,
    format_table,
    reports_to_csv,
    reports_to_json,
    run_config,
    run_episode,
    success_rate,
)
from distnav.policy import make_policy
from distnav.predictor import OraclePredictor, RelationModel
from distnav.scene import Action, EpisodeSpec, NoReachableTarget, Pose, sample_episode


def _rec(success, p, l, target=0, eid=0):
    spec = EpisodeSpec("s", Pose(1.5, 1.5, 0.0), target, l, episode_id=eid)
    return EpisodeRecord(spec, [], [], success, p, 1, 0, STOPPED_SUCCESS if success else TIMEOUT)


def test_spl_examples():
    assert compute_spl([_rec(False, 3.0, 2.0), _rec(False, 9.0, 4.0)]) == 0.0
    assert compute_spl([_rec(True, 5.0, 5.0)]) == 1.0
    assert compute_spl([_rec(True, 20.0, 10.0), _rec(False, 4.0, 3.0)]) == 0.25
    with pytest.raises(ValueError):
        compute_spl([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(0.0, 50.0), st.floats(0.1, 30.0)),
                min_size=1, max_size=30))
def test_spl_bounded_by_success_rate(items):
    recs = [_rec(s, p, l) for s, p, l in items]
    spl = compute_spl(recs)
    assert 0.0 <= spl <= success_rate(recs) + 1e-12


def test_episode_rng_keyed_by_episode():
    a = episode_rng(3, 7).random(4)
    assert np.array_equal(a, episode_rng(3, 7).random(4))
    assert not np.array_equal(a, episode_rng(3, 8).random(4))
    assert not np.array_equal(a, episode_rng(4, 7).random(4))


def _check_record(sc, rec):
    spec = rec.spec
    assert rec.steps_used == len(rec.actions) <= spec.max_steps
    steps = [math.hypot(b.x - a.x, b.y - a.y) * sc.cell_size
             for a, b in zip(rec.trajectory, rec.trajectory[1:])]
    assert rec.path_length_traveled == pytest.approx(sum(steps))
    d = target_distance(sc, spec.target_category)
    if rec.success:
        assert d[rec.trajectory[-1].cell] <= spec.success_radius
        assert rec.actions[-1] == Action.STOP


def test_start_next_to_visible_target_stops_quickly():
    sc = box_scene(40, 40, instances=[(0, [(20, 30), (20, 31)])])
    pose = Pose(12.5, 20.5, 0.0)        # 0.9 m from the target, facing it
    d = target_distance(sc, 0)[pose.cell]
    spec = EpisodeSpec("box", pose, 0, d)
    rec = run_episode(sc, spec, make_policy("cf"), OraclePredictor())
    assert rec.success and rec.steps_used <= 3
    assert compute_spl([rec]) == pytest.approx(1.0)
    _check_record(sc, rec)


def _two_rooms():
    walls = [(r, 40) for r in range(1, 59) if not 26 <= r <= 33]
    return box_scene(60, 80, walls=walls, doors=[[(r, 40) for r in range(26, 34)]],
                     instances=[(1, [(10, 70), (10, 71), (11, 70), (11, 71)])])


def test_oracle_cf_two_rooms_near_shortest():
    sc = _two_rooms()
    pose = Pose(10.5, 50.5, 0.0)
    spec = EpisodeSpec("box", pose, 1, target_distance(sc, 1)[pose.cell])
    rec = run_episode(sc, spec, make_policy("cf"), OraclePredictor())
    assert rec.success
    # shortest path by an independent Dijkstra, measured to the success radius
    o = dijkstra_oracle(sc.traversable, np.argwhere(~sc.traversable & (sc.category_grid == 1)))
    assert spec.shortest_path_length == pytest.approx(o[pose.cell] * sc.cell_size)
    assert rec.path_length_traveled <= 1.25 * spec.shortest_path_length
    _check_record(sc, rec)


def test_thin_wall_target_needs_geodesic_success():
    # target right behind a wall: 0.5 m Euclidean, far by geodesic
    walls = [(r, 20) for r in range(1, 35)]
    sc = box_scene(40, 40, walls=walls, instances=[(2, [(10, 29)])])
    d = target_distance(sc, 2)
    assert math.hypot(0, 29 - 19) * sc.cell_size == 0.5 and d[10, 19] > 1.0
    pose = Pose(19.5, 10.5, 0.0)
    rec = run_episode(sc, EpisodeSpec("box", pose, 2, d[10, 19], max_steps=40),
                      make_policy("cf"), OraclePredictor())
    assert not (rec.success and d[rec.trajectory[-1].cell] > 1.0)
    _check_record(sc, rec)


def test_misconfiguration_rejected():
    sc = _two_rooms()
    spec = EpisodeSpec("box", Pose(10.5, 50.5, 0.0), 1, 3.0)
    with pytest.raises(ValueError):
        run_episode(sc, spec, make_policy("cf"), None)
    with pytest.raises(ValueError):
        run_episode(sc, spec, make_policy("cf"), RelationModel(n_categories=5))


def test_sealed_target_rejected_at_sampling():
    walls = [(r, 20) for r in range(1, 39)]
    sc = box_scene(40, 40, walls=walls, instances=[(0, [(10, 30)])], spawn=[(10, 10)])
    assert np.isinf(target_distance(sc, 0)[10, 10])
    with pytest.raises(NoReachableTarget):
        sample_episode(sc, 0, 0)
    with pytest.raises(ValueError):
        EpisodeSpec(sc.scene_id, Pose(10, 10, 0.0), 0, float("inf"))


@pytest.fixture(scope="module")
def mini_bench(desk_scenes):
    scenes = {s.scene_id: s for s in desk_scenes[:2]}
    eps = []
    for i, sc in enumerate(desk_scenes[:2]):
        for j, t in enumerate(sc.categories_present()[:3]):
            if t < 6:
                eps.append(sample_episode(sc, t, 10 * i + j, max_steps=80, episode_id=len(eps)))
    return scenes, eps


def test_records_satisfy_invariants(mini_bench):
    scenes, eps = mini_bench
    for name, pred in (("cf", "oracle"), ("frontier", "none"), ("random", "none")):
        recs = run_config(scenes, eps, BenchConfig(policy=name, predictor=pred))
        for r in recs:
            _check_record(scenes[r.spec.scene_id], r)
            assert r.termination in (STOPPED_SUCCESS, STOPPED_FAILURE, TIMEOUT)


def test_serial_parallel_identical_csv(mini_bench, desk_scenes):
    scenes, eps = mini_bench
    names = desk_scenes[0].category_names
    cfg = BenchConfig(policy="cf", predictor="noisy", p_flip=0.3)
    a = aggregate(cfg, run_config(scenes, eps, cfg), names, 6)
    b = aggregate(cfg, run_config(scenes, eps, cfg, workers=2), names, 6)
    c = aggregate(cfg, run_config(scenes, eps, cfg), names, 6)
    assert reports_to_csv([a]) == reports_to_csv([b]) == reports_to_csv([c])
    assert reports_to_json([a]) == reports_to_json([b])
    for rep in (a, b):
        for row in rep.rows:
            assert row.spl <= row.success_rate + 1e-12


def test_aggregate_rows_and_omitted(desk_scenes):
    names = desk_scenes[0].category_names
    recs = [_rec(True, 2.0, 2.0, target=0, eid=0), _rec(False, 3.0, 2.0, target=0, eid=1),
            _rec(True, 4.0, 2.0, target=2, eid=2)]
    rep = aggregate(BenchConfig(), recs, names, 6)
    assert [r.category for r in rep.rows] == [names[0], names[2], "average"]
    assert rep.omitted == [names[1], names[3], names[4], names[5]]
    assert rep.average.episodes == 3
    assert rep.success_rate == pytest.approx(2 / 3) and rep.spl == pytest.approx(0.5)
    csv_text = reports_to_csv([rep])
    assert csv_text.splitlines()[0] == ("config_id,policy,predictor,category,episodes,success_rate,spl,"
                                        "mean_steps,mean_path_len")
    assert names[0] in format_table([rep])


def test_config_ids_distinct():
    ids = {BenchConfig(policy=p, predictor=q).config_id
           for p in ("cf", "pp", "def") for q in ("oracle", "noisy", "learned")}
    assert len(ids) == 9
    assert BenchConfig(partition=(2.0, 4.0, 8.0, 12.0, math.inf)).config_id != BenchConfig().config_id
