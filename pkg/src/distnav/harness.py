"""Episode execution, Success Rate / SPL and benchmark aggregation."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .distance import crop_window, target_distance
from .frontier import door_sector, extract_frontier
from .planner import Planner, PlannerConfig, path_to_action
from .policy import FRONTIER_GOAL, TARGET_GOAL, GoalPolicy, StepInput, make_policy
from .scene import Action, EpisodeSpec, Kinematics, Pose, Scene, step, swept_cells
from .sensing import (
    GLOBAL_SIZE,
    LOCAL_SIZE,
    NoiseConfig,
    SemanticGrid,
    SensorConfig,
    crop_local,
    sense,
    update_map,
)

STOPPED_SUCCESS = "stopped_success"
STOPPED_FAILURE = "stopped_failure"
TIMEOUT = "timeout"


def episode_rng(master_seed: int, episode_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(episode_id)]))


@dataclass
class EpisodeRecord:
    spec: EpisodeSpec
    actions: list
    trajectory: list          # poses, start included
    success: bool
    path_length_traveled: float
    steps_used: int
    collisions: int
    termination: str
    oracle_success: bool = False
    final_distance: float = math.inf

    def summary(self) -> dict:
        return {"episode_id": self.spec.episode_id, "scene_id": self.spec.scene_id,
                "target": self.spec.target_category, "success": self.success,
                "oracle_success": self.oracle_success, "steps": self.steps_used,
                "path_len": round(self.path_length_traveled, 6),
                "shortest": round(self.spec.shortest_path_length, 6),
                "collisions": self.collisions, "termination": self.termination}


@dataclass
class AgentConfig:
    sensor: SensorConfig = SensorConfig()
    noise: NoiseConfig = NoiseConfig()
    kinematics: Kinematics = Kinematics()
    planner: PlannerConfig = PlannerConfig()
    local_size: int = LOCAL_SIZE
    global_size: int = GLOBAL_SIZE
    stop_margin_m: float = 0.1
    theta_d: float = math.radians(120)


@dataclass
class StepView:
    """Handed to the per-step callback."""
    step: int
    pose: Pose
    global_map: SemanticGrid
    local_map: SemanticGrid
    frontier: object
    prediction: object
    goal: object
    action: Action


def _mark_bump(extra, scene, pose, kin):
    """Bump sensing: block the first cell that stopped a forward move."""
    rows, cols = swept_cells(pose, kin.forward_cells)
    h, w = scene.height, scene.width
    for r, c in zip(rows, cols):
        if not (0 <= r < h and 0 <= c < w) or not scene.traversable[r, c]:
            if 0 <= r < extra.shape[0] and 0 <= c < extra.shape[1]:
                extra[r, c] = True
            return


def run_episode(scene: Scene, spec: EpisodeSpec, policy: GoalPolicy, predictor=None,
                planner: Planner = None, agent: AgentConfig = AgentConfig(), seed: int = 0,
                callback=None, seek_target: bool = True) -> EpisodeRecord:
    """Sense, map, predict, select a goal, plan and act until Stop or the step
    budget runs out. ``seek_target=False`` disables the target override (pure
    exploration rollouts for data collection)."""
    if planner is None:
        planner = Planner(agent.planner)
    if scene.height > agent.global_size or scene.width > agent.global_size:
        raise ValueError("scene does not fit in the global map")
    if policy.needs_prediction and predictor is None:
        raise ValueError(f"policy {policy.name!r} needs a predictor")
    n_cat = len(scene.category_names)
    if predictor is not None and getattr(predictor, "n_categories", n_cat) != n_cat:
        raise ValueError("predictor category count does not match the scene")
    rng = episode_rng(seed, spec.episode_id)
    target = spec.target_category
    kin = agent.kinematics
    gmap = SemanticGrid.empty(n_cat, agent.global_size, agent.global_size, scene.cell_size)
    extra = np.zeros(gmap.shape, dtype=bool)
    policy.reset()
    if predictor is not None:
        predictor.reset(scene, int(rng.integers(2 ** 31)))
    gt = target_distance(scene, target)
    stop_radius = spec.success_radius - agent.stop_margin_m

    pose = spec.start_pose
    trajectory, actions = [pose], []
    traveled, collisions = 0.0, 0
    oracle = gt[pose.cell] <= spec.success_radius
    termination = TIMEOUT
    obs = sense(scene, pose, agent.sensor)
    update_map(gmap, obs, pose, agent.noise, rng)

    for t in range(spec.max_steps):
        local = crop_local(gmap, pose, agent.local_size)
        cell = local.pose_cell(pose)
        extra_local = crop_window(extra, local.origin, local.shape, fill=False)
        tmask = local.semantic(target) if seek_target and target < n_cat else None
        frontier, pred, reach = None, None, None
        if tmask is not None and tmask.any():
            inp = StepInput(local, None, None, t, cell, target_mask=tmask)
        elif not policy.needs_frontier:
            inp = StepInput(local, None, None, t, cell)
        else:
            frontier = extract_frontier(local)
            if getattr(policy, "needs_door_sector", False) and obs.door_visible:
                frontier = door_sector(frontier, pose, obs.door_bearing, policy.theta_d, local.origin)
            reach = planner.reach(local, cell, frontier.mask, extra_local)
            geo = np.where(frontier.mask, reach.distance_m, np.inf)
            if frontier.mask.any() and not np.isfinite(geo).any():
                reach = planner.reach(local, cell, frontier.mask, extra_local, inflate=0)
                geo = np.where(frontier.mask, reach.distance_m, np.inf)
            if policy.needs_prediction:
                pred = predictor.predict(local, frontier, target)
            inp = StepInput(local, frontier, geo, t, cell, target_mask=None, prediction=pred,
                            p_door=1.0 if obs.door_visible else 0.0)
        goal = policy.select(inp)
        gl = (goal.cell[0] - local.origin[0], goal.cell[1] - local.origin[1])
        plan = None
        if goal.kind == FRONTIER_GOAL and reach is not None and math.isfinite(reach.distance_m[gl]):
            plan = reach.path_to(gl)
        else:
            if goal.kind == TARGET_GOAL:
                gmask = tmask
            else:
                gmask = np.zeros(local.shape, dtype=bool)
                h, w = local.shape
                gmask[min(max(gl[0], 0), h - 1), min(max(gl[1], 0), w - 1)] = True
            plan = planner.plan(local, cell, gmask, extra_local)
        if plan is None:
            action = Action.TURN_LEFT
        else:
            remaining = plan.distance_m + plan.slack_m if goal.kind == TARGET_GOAL else None
            action = path_to_action(plan.path, pose, kin, local.origin, goal_kind=goal.kind,
                                    remaining_m=remaining, stop_radius=stop_radius,
                                    obstacles=local.obstacle | extra_local)
        if callback is not None:
            callback(StepView(t, pose, gmap, local, frontier, pred, goal, action))
        actions.append(action)
        new_pose, bumped = step(scene, pose, action, kin)
        if bumped:
            collisions += 1
            _mark_bump(extra, scene, pose, kin)
        traveled += math.hypot(new_pose.x - pose.x, new_pose.y - pose.y) * scene.cell_size
        pose = new_pose
        trajectory.append(pose)
        oracle = oracle or gt[pose.cell] <= spec.success_radius
        if action == Action.STOP:
            termination = STOPPED_SUCCESS if gt[pose.cell] <= spec.success_radius else STOPPED_FAILURE
            break
        if action == Action.MOVE_FORWARD or action in (Action.TURN_LEFT, Action.TURN_RIGHT):
            obs = sense(scene, pose, agent.sensor)
            update_map(gmap, obs, pose, agent.noise, rng)

    return EpisodeRecord(spec, actions, trajectory, termination == STOPPED_SUCCESS, traveled,
                         len(actions), collisions, termination, bool(oracle), float(gt[pose.cell]))


def compute_spl(records) -> float:
    """Mean of S_i * l_i / max(p_i, l_i)."""
    records = list(records)
    if not records:
        raise ValueError("empty record set")
    total = 0.0
    for r in records:
        l = r.spec.shortest_path_length
        if not l > 0:
            raise ValueError("shortest path length must be positive")
        if r.success:
            total += l / max(r.path_length_traveled, l)
    return total / len(records)


def success_rate(records) -> float:
    records = list(records)
    if not records:
        raise ValueError("empty record set")
    return sum(r.success for r in records) / len(records)


# -- benchmark ------------------------------------------------------------

@dataclass
class BenchConfig:
    policy: str = "cf"
    predictor: str = "oracle"          # oracle | noisy | learned | none
    partition: tuple = (1.0, 2.0, 4.0, 8.0, math.inf)
    p_flip: float = 0.2
    value_mode: str = "bin"
    commit_steps: int = 0
    noise: NoiseConfig = NoiseConfig()
    planner: PlannerConfig = PlannerConfig()
    sensor: SensorConfig = SensorConfig()
    seed: int = 0
    model_path: str = None

    @property
    def config_id(self) -> str:
        parts = [self.policy, self.predictor]
        if self.predictor == "noisy":
            parts.append(f"p{self.p_flip:g}")
        parts.append("-".join(f"{x:g}" for x in self.partition))
        if self.value_mode != "bin":
            parts.append(self.value_mode)
        if not self.noise.is_zero:
            parts.append(f"sem{self.noise.p_sem:g}-miss{self.noise.p_miss:g}")
        if self.planner.backend != "fmm":
            parts.append(self.planner.backend)
        return "_".join(parts)

    def fingerprint(self) -> dict:
        d = asdict(self)
        d["partition"] = [str(x) for x in self.partition]
        d["config_id"] = self.config_id
        return d


def make_predictor(cfg: BenchConfig, model=None):
    from .predictor import NoisyOraclePredictor, OraclePredictor, RelationModel
    if cfg.predictor == "none":
        return None
    if cfg.predictor == "oracle":
        return OraclePredictor(cfg.partition)
    if cfg.predictor == "noisy":
        return NoisyOraclePredictor(cfg.partition, p_flip=cfg.p_flip)
    if cfg.predictor == "learned":
        if model is None:
            if cfg.model_path is None:
                raise FileNotFoundError("learned predictor needs a model file")
            model = RelationModel.load(cfg.model_path)
        return model
    raise ValueError(f"unknown predictor {cfg.predictor!r}")


def _run_chunk(args):
    scenes, episodes, cfg, model = args
    predictor = make_predictor(cfg, model)
    policy = make_policy(cfg.policy, commit_steps=cfg.commit_steps, value_mode=cfg.value_mode) \
        if cfg.policy != "frontier" else make_policy("frontier")
    agent = AgentConfig(sensor=cfg.sensor, noise=cfg.noise, planner=cfg.planner)
    planner = Planner(cfg.planner)
    out = []
    for ep in episodes:
        rec = run_episode(scenes[ep.scene_id], ep, policy, predictor, planner, agent, cfg.seed)
        out.append(rec)
    return out


def run_config(scenes: dict, episodes, cfg: BenchConfig, *, model=None, workers: int = 1):
    """All episodes of one config; results are in episode order whatever
    ``workers`` is."""
    episodes = list(episodes)
    if workers <= 1 or len(episodes) < 2:
        return _run_chunk((scenes, episodes, cfg, model))
    chunks = [episodes[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_run_chunk, [(scenes, ch, cfg, model) for ch in chunks]))
    by_id = {r.spec.episode_id: r for part in parts for r in part}
    return [by_id[ep.episode_id] for ep in episodes]


@dataclass
class CategoryRow:
    category: str
    episodes: int
    success_rate: float
    spl: float
    mean_steps: float
    mean_path_len: float


@dataclass
class BenchmarkReport:
    config: BenchConfig
    rows: list                         # per category, then "average"
    records: list = field(repr=False, default_factory=list)
    omitted: list = field(default_factory=list)

    @property
    def average(self) -> CategoryRow:
        return self.rows[-1]

    @property
    def success_rate(self) -> float:
        return self.average.success_rate

    @property
    def spl(self) -> float:
        return self.average.spl

    def fingerprint(self) -> dict:
        return self.config.fingerprint()

    def fingerprint_hash(self) -> str:
        blob = json.dumps(self.fingerprint(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _row(name, recs) -> CategoryRow:
    return CategoryRow(name, len(recs), success_rate(recs), compute_spl(recs),
                       float(np.mean([r.steps_used for r in recs])),
                       float(np.mean([r.path_length_traveled for r in recs])))


def aggregate(cfg: BenchConfig, records, category_names, n_targets=None) -> BenchmarkReport:
    """Per-category rows in category order, and an episode-weighted average
    row. Categories without episodes are omitted and listed."""
    n_targets = len(category_names) if n_targets is None else n_targets
    rows, omitted = [], []
    for t in range(n_targets):
        recs = [r for r in records if r.spec.target_category == t]
        if not recs:
            omitted.append(category_names[t])
            continue
        rows.append(_row(category_names[t], recs))
    if records:
        rows.append(_row("average", records))
    return BenchmarkReport(cfg, rows, list(records), omitted)


def run_benchmark(scenes: dict, episodes, configs, *, category_names, n_targets=None,
                  models: dict = None, workers: int = 1) -> list:
    """One report per config."""
    reports = []
    for cfg in configs:
        model = None if models is None else models.get(cfg.model_path)
        recs = run_config(scenes, episodes, cfg, model=model, workers=workers)
        reports.append(aggregate(cfg, recs, category_names, n_targets))
    return reports


CSV_COLUMNS = ["config_id", "policy", "predictor", "category", "episodes", "success_rate", "spl",
               "mean_steps", "mean_path_len"]


def reports_to_csv(reports) -> str:
    out = io.StringIO()
    wr = csv.writer(out, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for rep in reports:
        c = rep.config
        for row in rep.rows:
            wr.writerow([c.config_id, c.policy, c.predictor, row.category, row.episodes,
                         f"{row.success_rate:.4f}", f"{row.spl:.4f}", f"{row.mean_steps:.2f}",
                         f"{row.mean_path_len:.4f}"])
    return out.getvalue()


def reports_to_json(reports) -> str:
    payload = []
    for rep in reports:
        payload.append({
            "fingerprint": rep.fingerprint(),
            "fingerprint_hash": rep.fingerprint_hash(),
            "rows": [asdict(r) for r in rep.rows],
            "omitted_categories": rep.omitted,
            "episodes": [r.summary() for r in rep.records],
        })
    return json.dumps(payload, indent=2, sort_keys=True)


def format_table(reports) -> str:
    """Plain-text table: one line per config, SR/SPL per category and the
    average."""
    if not reports:
        return ""
    cats = [r.category for r in reports[0].rows]
    head = f"{'config':<36}" + "".join(f"{c[:12]:>14}" for c in cats)
    lines = [head, "-" * len(head)]
    for rep in reports:
        vals = {r.category: r for r in rep.rows}
        cells = []
        for c in cats:
            r = vals.get(c)
            cells.append(f"{'-':>14}" if r is None else f"{r.success_rate:>6.3f}/{r.spl:<7.3f}")
        lines.append(f"{rep.config.config_id:<36}" + "".join(cells))
    return "\n".join(lines)
