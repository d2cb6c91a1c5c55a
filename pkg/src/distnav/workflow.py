"""Scene sets, benchmark episodes and the collect/train/evaluate pipeline,
shared by the CLI and the test suite."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dataset import collect_training_samples
from .distance import UNKNOWN
from .harness import AgentConfig
from .predictor import ConstantPredictor, evaluate_predictor, train
from .scene import Scene, generate_scene, load_episodes, sample_episode, save_episodes


class PreconditionError(RuntimeError):
    pass


def scene_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), index, 0x5CE]).generate_state(1)[0])


def generate_scene_set(gen_cfg, n: int, master_seed: int = 0) -> list:
    return [generate_scene(gen_cfg, scene_seed(master_seed, i), f"scene_{i:03d}") for i in range(n)]


def split_scenes(scenes, n_train: int):
    return list(scenes[:n_train]), list(scenes[n_train:])


def sample_benchmark_episodes(scenes, per_scene: int, master_seed: int = 0, *, n_targets: int = 6,
                              margin_m: float = 2.0, max_steps: int = 500) -> list:
    """``per_scene`` episodes per scene, targets cycling over the target
    categories present; episode ids are global and consecutive."""
    out = []
    for i, sc in enumerate(scenes):
        targets = [t for t in sc.categories_present() if t < n_targets]
        for j in range(per_scene):
            seed = int(np.random.SeedSequence([int(master_seed), i, j, 0xE915]).generate_state(1)[0])
            out.append(sample_episode(sc, targets[j % len(targets)], seed, margin_m=margin_m,
                                      max_steps=max_steps, episode_id=len(out)))
    return out


def write_scene_set(scenes, n_train: int, scene_dir, episodes=None, fingerprint: str = "") -> Path:
    d = Path(scene_dir)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, sc in enumerate(scenes):
        fname = f"{sc.scene_id}.json"
        sc.save(d / fname)
        entries.append({"scene_id": sc.scene_id, "file": fname, "seed": sc.seed,
                        "split": "train" if i < n_train else "test"})
    manifest = {"fingerprint": fingerprint, "scenes": entries}
    if episodes is not None:
        save_episodes(episodes, d / "episodes.json")
        manifest["episodes"] = "episodes.json"
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_scene_set(scene_dir):
    """Returns (train scenes, test scenes, episodes or None)."""
    d = Path(scene_dir)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise PreconditionError(f"no manifest in {d}; run generate first")
    manifest = json.loads(mpath.read_text())
    train_s, test_s = [], []
    for e in manifest["scenes"]:
        sc = Scene.load(d / e["file"])
        (train_s if e["split"] == "train" else test_s).append(sc)
    episodes = load_episodes(d / manifest["episodes"]) if "episodes" in manifest else None
    return train_s, test_s, episodes


def check_disjoint(train_ids, test_ids):
    overlap = sorted(set(train_ids) & set(test_ids))
    if overlap:
        raise PreconditionError(f"evaluation scenes overlap training scenes: {overlap}")


def collect(scenes, samples_per_scene: int, seed: int, *, interval: int = 25, rollout_steps: int = 200,
            partition=None, n_targets: int = 6, agent: AgentConfig = AgentConfig()):
    """``samples_per_scene`` samples from every scene, each scene with its own
    seed stream."""
    kw = {} if partition is None else {"partition": partition}
    out = []
    for i, sc in enumerate(scenes):
        s = int(np.random.SeedSequence([int(seed), i, 0xC011]).generate_state(1)[0])
        out.extend(collect_training_samples([sc], samples_per_scene, s, interval=interval,
                                            rollout_steps=rollout_steps, n_targets=n_targets,
                                            agent=agent, **kw))
    return out


def train_model(samples, *, n_targets: int = 6, n_categories: int = 12, partition=None,
                alpha: float = 1.0):
    if not samples:
        raise PreconditionError("empty training split")
    kw = {} if partition is None else {"partition": partition}
    return train(samples, n_targets=n_targets, n_categories=n_categories, alpha=alpha, **kw)


def constant_baseline(train_samples, partition):
    """Constant predictor of the most frequent masked ground-truth bin."""
    n_b = len(partition)
    counts = np.zeros(n_b, dtype=np.int64)
    for s in train_samples:
        b = s.gt_bins[s.mask & (s.gt_bins != UNKNOWN)].astype(np.int64)
        counts += np.bincount(b, minlength=n_b)
    return ConstantPredictor(int(np.argmax(counts)), partition)


def evaluate(model, test_samples, baseline=None):
    rep = evaluate_predictor(model, test_samples)
    base = evaluate_predictor(baseline, test_samples) if baseline is not None else None
    return rep, base


def episodes_for(scenes, episodes):
    ids = {s.scene_id for s in scenes}
    return [e for e in episodes if e.scene_id in ids]
