"""Offline training samples: exploration rollouts, frontier-band masks and
cropped ground-truth bins, plus a compact binary store with a JSONL index."""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distance import (
    DEFAULT_PARTITION,
    UNKNOWN,
    build_gt_field,
    check_partition,
    frontier_band_mask,
)
from .frontier import extract_frontier
from .harness import AgentConfig, run_episode
from .policy import make_policy
from .scene import EpisodeSpec, Pose
from .sensing import SemanticGrid


@dataclass
class TrainingSample:
    local_map: SemanticGrid
    gt_bins: np.ndarray       # int8, UNKNOWN where undefined
    mask: np.ndarray          # frontier band, restricted to defined gt
    target_category: int
    scene_id: str = ""
    step: int = 0
    rollout: int = 0


def make_sample(scene, local_map, frontier, target, partition=DEFAULT_PARTITION,
                band_width: float = 1.0, **meta) -> TrainingSample:
    gt = build_gt_field(scene, target, partition).crop(local_map.origin, local_map.shape)
    mask = frontier_band_mask(local_map, frontier, band_width) & (gt != UNKNOWN)
    return TrainingSample(local_map, gt, mask, int(target), scene.scene_id, **meta)


def collect_training_samples(scenes, count: int, seed: int = 0, *, policy: str = "random",
                             interval: int = 25, rollout_steps: int = 200, n_targets: int = 6,
                             partition=DEFAULT_PARTITION, band_width: float = 1.0,
                             agent: AgentConfig = AgentConfig()):
    """Yield up to ``count`` samples. Rollouts cycle over ``scenes`` with
    seeded spawn poses; every ``interval`` steps the local map is paired with
    the GT bins of each target category present in the scene."""
    partition = check_partition(partition)
    scenes = list(scenes)
    if count <= 0 or not scenes:
        return
    produced = 0
    rollout = 0
    while produced < count:
        scene = scenes[rollout % len(scenes)]
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), rollout]))
        r, c = scene.spawn_cells[int(rng.integers(len(scene.spawn_cells)))]
        pose = Pose.at_cell(int(r), int(c), float(rng.uniform(0, 2 * np.pi)))
        targets = [t for t in scene.categories_present() if t < n_targets]
        spec = EpisodeSpec(scene.scene_id, pose, targets[0], 1.0, max_steps=rollout_steps,
                           episode_id=rollout)
        snaps = []

        def grab(view, snaps=snaps):
            if view.step > 0 and view.step % interval == 0:
                snaps.append((view.step, view.local_map.copy(), view.frontier))

        run_episode(scene, spec, make_policy(policy), None, agent=agent, seed=seed,
                    callback=grab, seek_target=False)
        for step, local, frontier in snaps:
            if frontier is None:
                frontier = extract_frontier(local)
            band = frontier_band_mask(local, frontier, band_width)
            for t in targets:
                gt = build_gt_field(scene, t, partition).crop(local.origin, local.shape)
                yield TrainingSample(local, gt, band & (gt != UNKNOWN), int(t), scene.scene_id,
                                     step, rollout)
                produced += 1
                if produced >= count:
                    return
        rollout += 1
        if rollout > 1000 * max(count, 1):
            return


# -- binary store -----------------------------------------------------------
#
# One record per snapshot: magic, version, k, h, w, origin, cell size, number
# of targets, payload length; payload (zlib) = packed channels, packed mask,
# then per target (uint8 id, int8 bins).

_MAGIC = b"DNTS"
_REC = struct.Struct("<4sHHHHiidHI")


def _group(samples):
    """Consecutive samples sharing a map object form one snapshot."""
    group = []
    for s in samples:
        if group and s.local_map is not group[0].local_map:
            yield group
            group = []
        group.append(s)
    if group:
        yield group


def save_samples(samples, path, index_path=None) -> int:
    """Write samples; returns the number written."""
    path = Path(path)
    index_path = Path(index_path) if index_path else path.with_suffix(".jsonl")
    n = 0
    with open(path, "wb") as fb, open(index_path, "w") as fi:
        for group in _group(samples):
            g = group[0].local_map
            k, (h, w) = g.k, g.shape
            parts = [np.packbits(g.channels).tobytes(), np.packbits(group[0].mask).tobytes()]
            for s in group:
                if not np.array_equal(s.mask, group[0].mask):
                    raise ValueError("samples of one snapshot must share the mask")
                parts.append(struct.pack("<B", s.target_category) + s.gt_bins.astype(np.int8).tobytes())
            payload = zlib.compress(b"".join(parts), 6)
            offset = fb.tell()
            fb.write(_REC.pack(_MAGIC, 1, k, h, w, int(g.origin[0]), int(g.origin[1]), g.cell_size,
                               len(group), len(payload)))
            fb.write(payload)
            fi.write(json.dumps({"offset": offset, "scene_id": group[0].scene_id,
                                 "step": group[0].step, "rollout": group[0].rollout,
                                 "targets": [s.target_category for s in group]}) + "\n")
            n += len(group)
    return n


def load_samples(path, index_path=None):
    """Iterate samples from a store written by ``save_samples``."""
    path = Path(path)
    index_path = Path(index_path) if index_path else path.with_suffix(".jsonl")
    data = path.read_bytes()
    for line in index_path.read_text().splitlines():
        if not line.strip():
            continue
        meta = json.loads(line)
        pos = meta["offset"]
        magic, ver, k, h, w, r0, c0, cell, n_t, size = _REC.unpack_from(data, pos)
        if magic != _MAGIC or ver != 1:
            raise ValueError(f"bad sample record at offset {pos}")
        raw = zlib.decompress(data[pos + _REC.size:pos + _REC.size + size])
        nch = k * h * w
        ch_bytes = (nch + 7) // 8
        m_bytes = (h * w + 7) // 8
        chans = np.unpackbits(np.frombuffer(raw, np.uint8, ch_bytes), count=nch).astype(bool).reshape(k, h, w)
        mask = np.unpackbits(np.frombuffer(raw, np.uint8, m_bytes, ch_bytes), count=h * w).astype(bool).reshape(h, w)
        grid = SemanticGrid(chans, (r0, c0), cell)
        off = ch_bytes + m_bytes
        for _ in range(n_t):
            t = raw[off]
            bins = np.frombuffer(raw, np.int8, h * w, off + 1).reshape(h, w).copy()
            off += 1 + h * w
            yield TrainingSample(grid, bins, mask, int(t), meta["scene_id"], meta["step"], meta["rollout"])
