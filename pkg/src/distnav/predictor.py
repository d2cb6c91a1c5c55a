"""Target-distance predictors over the frontier band.

Every predictor returns per-cell bin ids (UNKNOWN outside the band) and bin
scores. Implementations: the ground-truth oracle, an oracle with random
one-bin flips, a constant-bin baseline, and a count-based relation model that
scores bins from the distances to observed object categories.
"""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distance import (
    DEFAULT_BIN_WEIGHTS,
    DEFAULT_PARTITION,
    UNKNOWN,
    bin_labels,
    build_gt_field,
    check_partition,
    frontier_band_mask,
    geodesic_cells,
)
from .frontier import extract_frontier


@dataclass
class DistancePrediction:
    bins: np.ndarray        # int8 local grid, UNKNOWN where undefined
    scores: np.ndarray      # (n_b, h, w) float, all zero where undefined
    target_category: int
    partition: tuple

    @property
    def defined(self) -> np.ndarray:
        return self.bins != UNKNOWN

    @classmethod
    def from_bins(cls, bins, target, partition):
        n_b = len(partition)
        bins = np.asarray(bins, dtype=np.int8)
        scores = np.zeros((n_b,) + bins.shape, dtype=np.float32)
        r, c = np.nonzero(bins != UNKNOWN)
        scores[bins[r, c], r, c] = 1.0
        return cls(bins, scores, int(target), tuple(partition))

    @classmethod
    def unknown(cls, shape, target, partition):
        return cls.from_bins(np.full(shape, UNKNOWN, dtype=np.int8), target, partition)


def representative_values(partition, open_value: float = 12.0) -> np.ndarray:
    """Meters standing in for each bin: interval midpoints, ``open_value``
    for the open-ended last bin."""
    p = check_partition(partition)
    lows = (0.0,) + p[:-1]
    vals = [(lo + hi) / 2 for lo, hi in zip(lows[:-1], p[:-1])] + [max(open_value, p[-2])]
    return np.asarray(vals)


def prediction_values(pred: DistancePrediction, mode: str = "bin", open_value: float = 12.0):
    """Per-cell predicted distance in meters, +inf where UNKNOWN.

    ``mode="bin"`` maps the bin to its representative value; ``"expected"``
    takes the expectation under the bin scores (the continuous variant).
    """
    rep = representative_values(pred.partition, open_value)
    out = np.full(pred.bins.shape, np.inf)
    d = pred.defined
    if mode == "bin":
        out[d] = rep[pred.bins[d]]
    elif mode == "expected":
        out[d] = np.tensordot(rep, pred.scores[:, d], axes=1)
    else:
        raise ValueError(f"unknown value mode {mode!r}")
    return out


class Predictor:
    name = "base"

    def __init__(self, partition=DEFAULT_PARTITION, band_width: float = 1.0):
        self.partition = check_partition(partition)
        self.band_width = band_width

    @property
    def n_bins(self) -> int:
        return len(self.partition)

    def reset(self, scene=None, seed: int = 0) -> None:
        """Called at the start of every episode (or sample scene)."""

    def band(self, grid, frontier):
        return frontier_band_mask(grid, frontier, self.band_width)

    def predict(self, grid, frontier, target, band=None) -> DistancePrediction:
        raise NotImplementedError

    def predict_grouped(self, grid, frontier, targets) -> np.ndarray:
        """Stacked scores, one group of n_b channels per target."""
        band = self.band(grid, frontier)
        return np.concatenate([self.predict(grid, frontier, t, band).scores for t in targets])


class OraclePredictor(Predictor):
    """Ground-truth bins on the frontier band."""
    name = "oracle"

    def __init__(self, partition=DEFAULT_PARTITION, band_width: float = 1.0):
        super().__init__(partition, band_width)
        self.scene = None
        self._fields = {}

    def reset(self, scene=None, seed: int = 0) -> None:
        if scene is not self.scene:
            self.scene = scene
            self._fields = {}

    def gt_bins(self, grid, target):
        if self.scene is None:
            raise RuntimeError("oracle predictor needs reset(scene) first")
        if target not in self._fields:
            self._fields[target] = build_gt_field(self.scene, target, self.partition)
        return self._fields[target].crop(grid.origin, grid.shape)

    def predict(self, grid, frontier, target, band=None):
        if band is None:
            band = self.band(grid, frontier)
        bins = np.where(band, self.gt_bins(grid, target), UNKNOWN).astype(np.int8)
        return DistancePrediction.from_bins(bins, target, self.partition)


class NoisyOraclePredictor(OraclePredictor):
    """Oracle bins moved one bin up or down with probability ``p_flip``."""
    name = "noisy"

    def __init__(self, partition=DEFAULT_PARTITION, band_width: float = 1.0, p_flip: float = 0.2):
        super().__init__(partition, band_width)
        self.p_flip = p_flip
        self.rng = np.random.default_rng(0)

    def reset(self, scene=None, seed: int = 0) -> None:
        super().reset(scene, seed)
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xF11B]))

    def predict(self, grid, frontier, target, band=None):
        pred = super().predict(grid, frontier, target, band)
        if self.p_flip <= 0:
            return pred
        bins = pred.bins.copy()
        r, c = np.nonzero(bins != UNKNOWN)
        flip = self.rng.random(len(r)) < self.p_flip
        direction = np.where(self.rng.random(len(r)) < 0.5, -1, 1)
        b = bins[r, c].astype(np.int64)
        moved = b + direction
        moved = np.where(moved < 0, 1, moved)
        moved = np.where(moved >= self.n_bins, self.n_bins - 2, moved)
        b = np.where(flip, moved, b)
        bins[r, c] = b
        return DistancePrediction.from_bins(bins, target, self.partition)


class ConstantPredictor(Predictor):
    """Predicts the same bin everywhere on the band."""
    name = "constant"

    def __init__(self, bin_id: int, partition=DEFAULT_PARTITION, band_width: float = 1.0):
        super().__init__(partition, band_width)
        self.bin_id = int(bin_id)

    def predict(self, grid, frontier, target, band=None):
        if band is None:
            band = self.band(grid, frontier)
        bins = np.where(band, self.bin_id, UNKNOWN).astype(np.int8)
        return DistancePrediction.from_bins(bins, target, self.partition)


# -- relation model --------------------------------------------------------

def category_buckets(grid, band, bucket_edges, cell_region=None) -> dict:
    """For every category present in the map's semantic channels, the
    proximity bucket of each band cell: geodesic distance (free, i.e.
    non-obstacle, cells) to the nearest cell of that category, bucketed by
    ``bucket_edges`` (meters). Unreachable or beyond the last edge falls in
    the last bucket. Returns {category: (rows, cols, buckets)}."""
    edges = np.asarray(bucket_edges, dtype=float)
    cap = edges[-1] / grid.cell_size if len(edges) else 0.0
    rows, cols = np.nonzero(band)
    out = {}
    if len(rows) == 0:
        return out
    present = np.nonzero(grid.semantics.any(axis=(1, 2)))[0]
    if len(present) == 0:
        return out
    # bounding box of band and semantic cells: distances are capped, so pad by the cap
    pad = int(math.ceil(cap)) + 1
    h, w = grid.shape
    sem_any = grid.semantics[present].any(axis=0)
    rr = np.concatenate([rows, np.nonzero(sem_any.any(axis=1))[0]])
    cc = np.concatenate([cols, np.nonzero(sem_any.any(axis=0))[0]])
    r0, r1 = max(rr.min() - pad, 0), min(rr.max() + pad + 1, h)
    c0, c1 = max(cc.min() - pad, 0), min(cc.max() + pad + 1, w)
    passable = ~grid.obstacle[r0:r1, c0:c1]
    sub_band = band[r0:r1, c0:c1]
    for c in present:
        src = grid.semantic(int(c))[r0:r1, c0:c1]
        if not src.any():
            bucket = np.full(len(rows), len(edges), dtype=np.int64)
        else:
            d = geodesic_cells(passable, src, stop=sub_band, max_cells=cap + 1e-9)
            dm = d[rows - r0, cols - c0] * grid.cell_size
            bucket = np.searchsorted(edges, dm, side="right")
        out[int(c)] = (rows, cols, bucket)
    return out


MODEL_MAGIC = b"DNRELM01"
_MODEL_HEADER = struct.Struct("<IIIIId")


@dataclass
class RelationModel(Predictor):
    """Naive-Bayes over proximity buckets of observed categories.

    ``counts[t, c, k, b]`` accumulates the weight of GT bin ``b`` for band
    cells whose nearest ``c`` lies in bucket ``k`` while looking for target
    ``t``; ``prior_counts[t, b]`` is the weighted GT bin histogram.
    """
    n_targets: int = 6
    n_categories: int = 12
    partition: tuple = DEFAULT_PARTITION
    bucket_edges: tuple = None
    alpha: float = 1.0
    weights: tuple = DEFAULT_BIN_WEIGHTS
    band_width: float = 1.0
    counts: np.ndarray = None
    prior_counts: np.ndarray = None
    name: str = field(default="learned", init=False)

    def __post_init__(self):
        self.partition = check_partition(self.partition)
        if self.bucket_edges is None:
            self.bucket_edges = self.partition[:-1]
        self.bucket_edges = tuple(float(e) for e in self.bucket_edges)
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.weights) != self.n_bins:
            raise ValueError("need one weight per bin")
        shape = (self.n_targets, self.n_categories, self.n_buckets, self.n_bins)
        if self.counts is None:
            self.counts = np.zeros(shape)
        if self.prior_counts is None:
            self.prior_counts = np.zeros((self.n_targets, self.n_bins))
        if self.counts.shape != shape or self.prior_counts.shape != (self.n_targets, self.n_bins):
            raise ValueError("count tensor shape mismatch")

    @property
    def n_buckets(self) -> int:
        return len(self.bucket_edges) + 1

    @property
    def trained(self) -> bool:
        return bool(self.prior_counts.sum() > 0)

    def priors(self, target: int) -> np.ndarray:
        pc = self.prior_counts[target]
        total = pc.sum()
        if total == 0 and self.alpha == 0:
            return np.full(self.n_bins, 1.0 / self.n_bins)
        return (pc + self.alpha) / (total + self.alpha * self.n_bins)

    def accumulate(self, sample, feats: dict = None) -> None:
        """Add one training sample's events (masked cells x observed
        categories). ``feats`` may carry precomputed category buckets for the
        sample's map and mask."""
        mask = sample.mask & (sample.gt_bins != UNKNOWN)
        if not mask.any():
            return
        t = int(sample.target_category)
        w = np.asarray(self.weights)
        gt = sample.gt_bins
        rows, cols = np.nonzero(mask)
        b = gt[rows, cols].astype(np.int64)
        self.prior_counts[t] += np.bincount(b, weights=w[b], minlength=self.n_bins)
        if feats is None:
            feats = category_buckets(sample.local_map, mask, self.bucket_edges)
        for c, (fr, fc, k) in feats.items():
            if c >= self.n_categories:
                continue
            fb = gt[fr, fc].astype(np.int64)
            flat = k * self.n_bins + fb
            self.counts[t, c] += np.bincount(flat, weights=w[fb],
                                             minlength=self.n_buckets * self.n_bins
                                             ).reshape(self.n_buckets, self.n_bins)

    def merge(self, other: "RelationModel") -> "RelationModel":
        if other.counts.shape != self.counts.shape:
            raise ValueError("cannot merge models with different dimensions")
        out = self.copy()
        out.counts += other.counts
        out.prior_counts += other.prior_counts
        return out

    def copy(self) -> "RelationModel":
        return RelationModel(self.n_targets, self.n_categories, self.partition, self.bucket_edges,
                             self.alpha, self.weights, self.band_width,
                             self.counts.copy(), self.prior_counts.copy())

    def _log_tables(self, target):
        """log P(bin | target, category, bucket); NaN marks (c, k) cells with
        no evidence, which are skipped."""
        cnt = self.counts[target]
        total = cnt.sum(axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            p = (cnt + self.alpha) / (total + self.alpha * self.n_bins)
            logp = np.log(p)
        logp = np.where(total > 0, logp, np.nan)
        return logp

    def predict(self, grid, frontier, target, band=None):
        shape = grid.shape
        if band is None:
            band = self.band(grid, frontier)
        if target >= self.n_targets or self.prior_counts[target].sum() == 0:
            return DistancePrediction.unknown(shape, target, self.partition)
        feats = category_buckets(grid, band, self.bucket_edges)
        feats = {c: v for c, v in feats.items() if c < self.n_categories}
        if not feats:
            return DistancePrediction.unknown(shape, target, self.partition)
        rows, cols = np.nonzero(band)
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors(target))
        logits = np.tile(log_prior, (len(rows), 1))
        tables = self._log_tables(target)
        for c, (_, _, k) in feats.items():
            contrib = tables[c][k]
            logits += np.nan_to_num(contrib, nan=0.0, neginf=-np.inf)
        dead = ~np.isfinite(logits).any(axis=1)
        if dead.any():
            logits[dead] = log_prior
        m = logits.max(axis=1, keepdims=True)
        post = np.exp(logits - m)
        post /= post.sum(axis=1, keepdims=True)
        bins = np.full(shape, UNKNOWN, dtype=np.int8)
        scores = np.zeros((self.n_bins,) + shape, dtype=np.float32)
        bins[rows, cols] = np.argmax(post, axis=1)
        scores[:, rows, cols] = post.T
        return DistancePrediction(bins, scores, int(target), self.partition)

    # -- model file --------------------------------------------------------
    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(MODEL_MAGIC)
        buf.write(_MODEL_HEADER.pack(1, self.n_targets, self.n_categories, self.n_bins,
                                     self.n_buckets, float(self.alpha)))
        buf.write(struct.pack("<d", self.band_width))
        buf.write(np.asarray(self.partition, dtype="<f8").tobytes())
        buf.write(np.asarray(self.bucket_edges, dtype="<f8").tobytes())
        buf.write(np.asarray(self.weights, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(self.counts, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(self.prior_counts, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RelationModel":
        if data[:8] != MODEL_MAGIC:
            raise ValueError("not a relation model file")
        pos = 8
        version, n_t, n_c, n_b, n_k, alpha = _MODEL_HEADER.unpack_from(data, pos)
        if version != 1:
            raise ValueError(f"unsupported model version {version}")
        pos += _MODEL_HEADER.size
        (band_width,) = struct.unpack_from("<d", data, pos)
        pos += 8

        def take(n):
            nonlocal pos
            a = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64)
            pos += 8 * n
            return a

        partition = tuple(take(n_b))
        edges = tuple(take(n_k - 1))
        weights = tuple(take(n_b))
        counts = take(n_t * n_c * n_k * n_b).reshape(n_t, n_c, n_k, n_b)
        prior = take(n_t * n_b).reshape(n_t, n_b)
        return cls(n_t, n_c, partition, edges, alpha, weights, band_width, counts, prior)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "RelationModel":
        return cls.from_bytes(Path(path).read_bytes())


def train(samples, *, n_targets=6, n_categories=12, partition=DEFAULT_PARTITION, alpha=1.0,
          bucket_edges=None, weights=DEFAULT_BIN_WEIGHTS, band_width=1.0) -> RelationModel:
    """Fit the relation model by weighted counting over masked cells."""
    model = RelationModel(n_targets, n_categories, partition, bucket_edges, alpha, weights, band_width)
    n = 0
    key, feats = None, None
    for s in samples:
        mask = s.mask & (s.gt_bins != UNKNOWN)
        # samples cut from one snapshot share map and mask: bucket once
        k = (id(s.local_map), mask.tobytes())
        if k != key:
            key, feats = k, category_buckets(s.local_map, mask, model.bucket_edges)
        model.accumulate(s, feats)
        n += 1
    if n == 0:
        raise ValueError("empty training stream")
    return model


# -- evaluation ----------------------------------------------------------

@dataclass
class PredictorReport:
    partition: tuple
    confusion: np.ndarray   # (n_b, n_b + 1): GT bin x predicted bin, last column UNKNOWN

    @property
    def precision(self) -> np.ndarray:
        cm = self.confusion
        tp = np.diag(cm[:, :-1])
        predicted = cm[:, :-1].sum(axis=0)
        actual = cm.sum(axis=1)
        out = np.full(len(tp), np.nan)
        has_pred = predicted > 0
        out[has_pred] = tp[has_pred] / predicted[has_pred]
        out[~has_pred & (actual > 0)] = 0.0
        return out

    @property
    def recall(self) -> np.ndarray:
        cm = self.confusion
        tp = np.diag(cm[:, :-1])
        actual = cm.sum(axis=1)
        out = np.full(len(tp), np.nan)
        ok = actual > 0
        out[ok] = tp[ok] / actual[ok]
        return out

    @property
    def macro_precision(self) -> float:
        return float(np.nanmean(self.precision)) if np.isfinite(self.precision).any() else float("nan")

    @property
    def macro_recall(self) -> float:
        return float(np.nanmean(self.recall)) if np.isfinite(self.recall).any() else float("nan")

    def to_csv(self) -> str:
        out = io.StringIO()
        wr = csv.writer(out, lineterminator="\n")
        wr.writerow(["Distance"] + bin_labels(self.partition) + ["Avg."])
        for name, vals, avg in (("Precision", self.precision, self.macro_precision),
                                ("Recall", self.recall, self.macro_recall)):
            wr.writerow([name] + [f"{v:.3f}" for v in vals] + [f"{avg:.3f}"])
        return out.getvalue()


def evaluate_predictor(predictor: Predictor, samples, scenes: dict = None) -> PredictorReport:
    """Per-bin precision/recall over the masked cells of held-out samples.
    ``scenes`` maps scene ids to scenes for predictors that need them."""
    n_b = predictor.n_bins
    cm = np.zeros((n_b, n_b + 1), dtype=np.int64)
    current = None
    for s in samples:
        if scenes is not None and s.scene_id != current:
            predictor.reset(scenes[s.scene_id])
            current = s.scene_id
        mask = s.mask & (s.gt_bins != UNKNOWN)
        if not mask.any():
            continue
        frontier = extract_frontier(s.local_map)
        pred = predictor.predict(s.local_map, frontier, s.target_category, band=s.mask)
        gt = s.gt_bins[mask].astype(np.int64)
        pb = pred.bins[mask].astype(np.int64)
        pb = np.where(pb == UNKNOWN, n_b, pb)
        np.add.at(cm, (gt, pb), 1)
    return PredictorReport(tuple(predictor.partition), cm)
