"""Files written by the CLI: CSV/JSON tables, matplotlib figures and map
snapshot panels. Every artifact carries the run fingerprint."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .distance import UNKNOWN, bin_labels
from .harness import format_table, reports_to_csv, reports_to_json
from .sensing import render_map, write_ppm

# bin colors, nearest first; unknown stays gray
_BIN_COLORS = np.array([[215, 25, 28], [253, 174, 97], [255, 255, 191], [171, 217, 233],
                        [44, 123, 182], [84, 39, 143], [30, 30, 80]], dtype=np.uint8)


def _png_meta(fingerprint: str) -> dict:
    # no Software key: keeps files byte-identical across runs
    return {"Software": None, "Description": fingerprint}


def _save(fig, path, fingerprint):
    fig.savefig(path, dpi=100, metadata=_png_meta(fingerprint))
    plt.close(fig)


def write_bench_outputs(reports, out_dir, fingerprint: str) -> dict:
    """results.csv, report.json, table.txt and two figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    paths["csv"] = out / "results.csv"
    paths["csv"].write_text(f"# {fingerprint}\n" + reports_to_csv(reports))
    paths["json"] = out / "report.json"
    paths["json"].write_text(json.dumps({"run": json.loads(fingerprint),
                                         "reports": json.loads(reports_to_json(reports))},
                                        indent=2, sort_keys=True))
    paths["table"] = out / "table.txt"
    paths["table"].write_text(format_table(reports) + "\n")
    if reports:
        paths["summary_png"] = out / "sr_spl.png"
        plot_summary(reports, paths["summary_png"], fingerprint)
        paths["category_png"] = out / "spl_by_category.png"
        plot_categories(reports, paths["category_png"], fingerprint)
    return paths


def plot_summary(reports, path, fingerprint=""):
    names = [r.config.config_id for r in reports]
    sr = [r.success_rate for r in reports]
    spl = [r.spl for r in reports]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(names) + 2), 4))
    ax.bar(x - 0.2, sr, 0.4, label="Success Rate")
    ax.bar(x + 0.2, spl, 0.4, label="SPL")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right")
    ax.set_title("average over episodes")
    fig.tight_layout()
    _save(fig, path, fingerprint)


def plot_categories(reports, path, fingerprint=""):
    cats = [r.category for r in reports[0].rows if r.category != "average"]
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(cats) * max(1, len(reports) / 2) + 2), 4))
    width = 0.8 / max(len(reports), 1)
    x = np.arange(len(cats))
    for i, rep in enumerate(reports):
        vals = {r.category: r.spl for r in rep.rows}
        ax.bar(x + i * width - 0.4 + width / 2, [vals.get(c, 0.0) for c in cats], width,
               label=rep.config.config_id)
    ax.set_xticks(x)
    ax.set_xticklabels(cats)
    ax.set_ylabel("SPL")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path, fingerprint)


def write_predictor_outputs(report, out_dir, fingerprint: str, baseline=None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "predictor.csv", "png": out / "predictor.png"}
    text = f"# {fingerprint}\n" + report.to_csv()
    if baseline is not None:
        text += "# constant-bin baseline\n" + baseline.to_csv()
    paths["csv"].write_text(text)
    labels = bin_labels(report.partition)
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(x - 0.2, np.nan_to_num(report.precision), 0.4, label="precision")
    ax.bar(x + 0.2, np.nan_to_num(report.recall), 0.4, label="recall")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.legend()
    ax.set_title(f"macro P {report.macro_precision:.3f} / R {report.macro_recall:.3f}")
    fig.tight_layout()
    _save(fig, paths["png"], fingerprint)
    return paths


# -- snapshots ---------------------------------------------------------------

def render_bins(bins: np.ndarray) -> np.ndarray:
    img = np.full(bins.shape + (3,), 128, dtype=np.uint8)
    d = bins != UNKNOWN
    img[d] = _BIN_COLORS[np.minimum(bins[d], len(_BIN_COLORS) - 1)]
    return img


def write_snapshot(view, out_dir, episode_id: int, fingerprint: str, partition) -> list:
    """Semantic-map and predicted-distance panels for one step: two PPMs and
    one side-by-side PNG."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    local = view.local_map
    agent = local.pose_cell(view.pose)
    fmask = None if view.frontier is None else view.frontier.mask
    sem = render_map(local, fmask, agent)
    stem = f"ep{episode_id:05d}_t{view.step:03d}"
    files = [out / f"{stem}_map.ppm"]
    write_ppm(files[0], sem, fingerprint)
    if view.prediction is not None:
        dist = render_bins(view.prediction.bins)
        files.append(out / f"{stem}_dist.ppm")
        write_ppm(files[-1], dist, fingerprint)
    else:
        dist = None
    fig, axes = plt.subplots(1, 2 if dist is not None else 1, figsize=(8 if dist is not None else 4, 4))
    axes = np.atleast_1d(axes)
    axes[0].imshow(sem, interpolation="nearest")
    axes[0].set_title("semantic map")
    if dist is not None:
        axes[1].imshow(dist, interpolation="nearest")
        axes[1].set_title("predicted distance bins")
        handles = [plt.Rectangle((0, 0), 1, 1, color=_BIN_COLORS[i] / 255) for i in range(len(partition))]
        axes[1].legend(handles, bin_labels(partition), fontsize=6, loc="lower right")
    for a in axes:
        a.set_xticks([])
        a.set_yticks([])
    fig.suptitle(f"episode {episode_id} step {view.step}")
    fig.tight_layout()
    files.append(out / f"{stem}.png")
    _save(fig, files[-1], fingerprint)
    return files
