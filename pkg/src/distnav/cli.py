"""Command line entry point.

    distnav generate        scenes + manifest + benchmark episodes
    distnav collect         exploration rollouts -> training samples
    distnav train           samples -> relation model file
    distnav eval-predictor  per-bin precision/recall on held-out scenes
    distnav bench           policy x predictor benchmark tables and figures
    distnav replay          one episode with map/distance snapshots

Settings come from ``--config`` (JSON), then the NAV_SEED environment
variable, then command line flags. Exit codes: 0 ok, 2 configuration error,
3 unmet precondition.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .dataset import load_samples, save_samples
from .harness import AgentConfig, aggregate, make_predictor, run_config, run_episode
from .planner import Planner, PlannerConfig
from .policy import make_policy
from .predictor import RelationModel
from .report import write_bench_outputs, write_predictor_outputs, write_snapshot
from .workflow import (
    PreconditionError,
    check_disjoint,
    collect,
    constant_baseline,
    episodes_for,
    generate_scene_set,
    read_scene_set,
    sample_benchmark_episodes,
    train_model,
    write_scene_set,
)

log = logging.getLogger("distnav")

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION = 0, 2, 3


def _csv_list(text):
    return [t for t in text.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distnav", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--scene-dir")
        sp.add_argument("--out", dest="output_dir")
        sp.add_argument("--model", dest="model_path")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--partition", type=_csv_list, help="e.g. 1,2,4,8,inf")
        return sp

    g = common(sub.add_parser("generate", help="generate scenes and episodes"))
    g.add_argument("--n-scenes", type=int)
    g.add_argument("--n-train", type=int)
    g.add_argument("--episodes-per-scene", type=int)
    g.add_argument("--preset", dest="generator_preset")

    c = common(sub.add_parser("collect", help="collect training samples on the train split"))
    c.add_argument("--samples-per-scene", type=int)

    t = common(sub.add_parser("train", help="train the relation model"))
    t.add_argument("--alpha", type=float)
    t.add_argument("--samples-per-scene", type=int)

    e = common(sub.add_parser("eval-predictor", help="evaluate the model on held-out scenes"))
    e.add_argument("--samples-per-scene", type=int)
    e.add_argument("--scene-ids", type=_csv_list, help="evaluate on these scenes instead of the test split")

    for name in ("bench", "replay"):
        b = common(sub.add_parser(name, help="run the benchmark" if name == "bench" else "replay one episode"))
        b.add_argument("--policy", dest="policies", type=_csv_list, help="pp,cf,def,random,frontier")
        b.add_argument("--predictor", dest="predictors", type=_csv_list, help="oracle,noisy,learned")
        b.add_argument("--planner", choices=["fmm", "dijkstra"])
        b.add_argument("--p-flip", type=float)
        b.add_argument("--snapshot-interval", type=int)
        b.add_argument("--workers", type=int)
        b.add_argument("--scene-ids", type=_csv_list)
        if name == "replay":
            b.add_argument("--episode", type=int, required=True)
    return p


def resolve_config(args) -> RunConfig:
    d = {}
    if getattr(args, "config", None):
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
    env = os.environ.get("NAV_SEED")
    if env is not None:
        try:
            d["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"NAV_SEED must be an integer, got {env!r}") from None
    skip = {"command", "config", "verbose", "episode", "scene_ids"}
    for k, v in vars(args).items():
        if k not in skip and v is not None:
            d[k] = v
    return RunConfig.from_dict(d)


# settings that change where or how fast a run executes, not its results
_EXECUTION_KEYS = ("output_dir", "workers")


def _fingerprint(cmd, cfg) -> str:
    d = {k: v for k, v in cfg.to_dict().items() if k not in _EXECUTION_KEYS}
    return json.dumps({"command": cmd, "config": d}, sort_keys=True)


def _agent(cfg) -> AgentConfig:
    return AgentConfig(sensor=cfg.sensor_config(), noise=cfg.noise_config(),
                       planner=PlannerConfig(backend=cfg.planner))


def _model_meta_path(model_path) -> Path:
    return Path(str(model_path) + ".json")


def cmd_generate(cfg: RunConfig) -> int:
    scenes = generate_scene_set(cfg.generator_config(), cfg.n_scenes, cfg.seed)
    test = scenes[cfg.n_train:]
    episodes = sample_benchmark_episodes(test, cfg.episodes_per_scene, cfg.seed, n_targets=cfg.n_targets,
                                         margin_m=cfg.margin_m, max_steps=cfg.max_steps)
    try:
        path = write_scene_set(scenes, cfg.n_train, cfg.scene_dir, episodes, _fingerprint("generate", cfg))
    except OSError as e:
        raise PreconditionError(f"cannot write scenes: {e}") from None
    print(f"wrote {len(scenes)} scenes ({cfg.n_train} train) and {len(episodes)} episodes; manifest {path}")
    return EXIT_OK


def _samples_path(cfg, split):
    return Path(cfg.output_dir) / f"samples_{split}.bin"


def cmd_collect(cfg: RunConfig, split: str = "train") -> int:
    train_s, test_s, _ = read_scene_set(cfg.scene_dir)
    scenes = train_s if split == "train" else test_s
    if not scenes:
        raise PreconditionError(f"empty {split} split")
    samples = collect(scenes, cfg.samples_per_scene, cfg.seed, interval=cfg.sample_interval,
                      rollout_steps=cfg.rollout_steps, partition=cfg.partition_tuple(),
                      n_targets=cfg.n_targets, agent=_agent(cfg))
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    n = save_samples(samples, _samples_path(cfg, split))
    print(f"wrote {n} {split} samples to {_samples_path(cfg, split)}")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    path = _samples_path(cfg, "train")
    if not path.exists():
        cmd_collect(cfg, "train")
    samples = list(load_samples(path))
    train_s, _, _ = read_scene_set(cfg.scene_dir)
    n_cat = len(train_s[0].category_names) if train_s else 12
    model = train_model(samples, n_targets=cfg.n_targets, n_categories=n_cat,
                        partition=cfg.partition_tuple(), alpha=cfg.alpha)
    Path(cfg.model_path).parent.mkdir(parents=True, exist_ok=True)
    model.save(cfg.model_path)
    meta = {"fingerprint": json.loads(_fingerprint("train", cfg)),
            "train_scenes": sorted({s.scene_id for s in samples}), "n_samples": len(samples)}
    _model_meta_path(cfg.model_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"trained on {len(samples)} samples; model {cfg.model_path}")
    return EXIT_OK


def _load_model(cfg):
    if not Path(cfg.model_path).exists():
        raise PreconditionError(f"model file {cfg.model_path} not found; run train first")
    model = RelationModel.load(cfg.model_path)
    meta_path = _model_meta_path(cfg.model_path)
    train_ids = json.loads(meta_path.read_text())["train_scenes"] if meta_path.exists() else []
    return model, train_ids


def _select_scenes(cfg, scene_ids):
    train_s, test_s, episodes = read_scene_set(cfg.scene_dir)
    if scene_ids:
        by_id = {s.scene_id: s for s in train_s + test_s}
        missing = [i for i in scene_ids if i not in by_id]
        if missing:
            raise PreconditionError(f"unknown scene ids {missing}")
        return [by_id[i] for i in scene_ids], train_s, episodes
    return test_s, train_s, episodes


def cmd_eval_predictor(cfg: RunConfig, scene_ids=None) -> int:
    model, train_ids = _load_model(cfg)
    scenes, train_s, _ = _select_scenes(cfg, scene_ids)
    if not scenes:
        raise PreconditionError("empty evaluation split")
    check_disjoint(train_ids or [s.scene_id for s in train_s], [s.scene_id for s in scenes])
    test_samples = collect(scenes, cfg.samples_per_scene, cfg.seed + 1, interval=cfg.sample_interval,
                           rollout_steps=cfg.rollout_steps, partition=cfg.partition_tuple(),
                           n_targets=cfg.n_targets, agent=_agent(cfg))
    train_path = _samples_path(cfg, "train")
    baseline = constant_baseline(list(load_samples(train_path)) if train_path.exists() else test_samples,
                                 model.partition)
    from .predictor import evaluate_predictor
    rep = evaluate_predictor(model, test_samples)
    base = evaluate_predictor(baseline, test_samples)
    paths = write_predictor_outputs(rep, cfg.output_dir, _fingerprint("eval-predictor", cfg), base)
    print(rep.to_csv(), end="")
    print(f"constant baseline (bin {baseline.bin_id}): macro P {base.macro_precision:.3f} "
          f"R {base.macro_recall:.3f}")
    print(f"wrote {paths['csv']}")
    return EXIT_OK


def _bench_inputs(cfg, scene_ids):
    scenes, train_s, episodes = _select_scenes(cfg, scene_ids)
    if episodes is None:
        raise PreconditionError("manifest lists no episodes")
    episodes = episodes_for(scenes, episodes)
    if not episodes:
        raise PreconditionError("no episodes for the selected scenes")
    return {s.scene_id: s for s in scenes}, episodes, train_s


def cmd_bench(cfg: RunConfig, scene_ids=None) -> int:
    scenes, episodes, train_s = _bench_inputs(cfg, scene_ids)
    configs = cfg.bench_configs()
    names = next(iter(scenes.values())).category_names
    model = None
    if any(c.predictor == "learned" for c in configs):
        model, train_ids = _load_model(cfg)
        check_disjoint(train_ids, list(scenes))
    fp = _fingerprint("bench", cfg)
    reports = []
    for bc in configs:
        if cfg.snapshot_interval > 0:
            recs = _run_with_snapshots(cfg, bc, scenes, episodes, model)
        else:
            recs = run_config(scenes, episodes, bc, model=model, workers=cfg.workers)
        reports.append(aggregate(bc, recs, names, cfg.n_targets))
    paths = write_bench_outputs(reports, cfg.output_dir, fp)
    for rep in reports:
        if rep.omitted:
            print(f"{rep.config.config_id}: no episodes for {', '.join(rep.omitted)}")
    print(Path(paths["table"]).read_text(), end="")
    for r in reports:
        if r.spl > r.success_rate + 1e-12:
            raise AssertionError("SPL exceeds success rate")
    print(f"wrote {paths['csv']}")
    return EXIT_OK


def _run_with_snapshots(cfg, bc, scenes, episodes, model, only=None):
    predictor = make_predictor(bc, model)
    planner = Planner(bc.planner)
    agent = AgentConfig(sensor=bc.sensor, noise=bc.noise, planner=bc.planner)
    fp = _fingerprint("bench", cfg)
    snap_dir = Path(cfg.output_dir) / "snapshots" / bc.config_id
    recs = []
    for ep in episodes:
        if only is not None and ep.episode_id != only:
            continue
        policy = make_policy(bc.policy, commit_steps=bc.commit_steps, value_mode=bc.value_mode) \
            if bc.policy != "frontier" else make_policy("frontier")

        def cb(view, ep=ep):
            if view.step % cfg.snapshot_interval == 0:
                write_snapshot(view, snap_dir, ep.episode_id, fp, bc.partition)

        recs.append(run_episode(scenes[ep.scene_id], ep, policy, predictor, planner, agent, bc.seed,
                                callback=cb))
    return recs


def cmd_replay(cfg: RunConfig, episode: int, scene_ids=None) -> int:
    scenes, episodes, _ = _bench_inputs(cfg, scene_ids)
    if episode not in {e.episode_id for e in episodes}:
        raise PreconditionError(f"episode {episode} not in the selected scenes")
    if cfg.snapshot_interval <= 0:
        cfg.snapshot_interval = 1
    bc = cfg.bench_configs()[0]
    model = _load_model(cfg)[0] if bc.predictor == "learned" else None
    rec = _run_with_snapshots(cfg, bc, scenes, episodes, model, only=episode)[0]
    out = Path(cfg.output_dir) / f"replay_{episode:05d}.json"
    out.write_text(json.dumps({"fingerprint": json.loads(_fingerprint("replay", cfg)),
                               "episode": rec.summary(),
                               "actions": [a.name for a in rec.actions],
                               "trajectory": [p.to_dict() for p in rec.trajectory]}, indent=2) + "\n")
    print(json.dumps(rec.summary()))
    print(f"wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "collect":
            return cmd_collect(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval-predictor":
            return cmd_eval_predictor(cfg, args.scene_ids)
        if args.command == "bench":
            return cmd_bench(cfg, args.scene_ids)
        if args.command == "replay":
            return cmd_replay(cfg, args.episode, args.scene_ids)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, FileNotFoundError) as e:
        print(f"precondition failed: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
