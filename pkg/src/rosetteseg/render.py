"""Overlay and report figure rendering (write-only, headless)."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricsReport  # noqa: E402
from .model import ImageMeta  # noqa: E402
from .sceneio import ResultData  # noqa: E402

_PALETTE = plt.get_cmap("tab20").colors


def _plant_color(plant_id: int):
    return _PALETTE[plant_id % len(_PALETTE)]


def render_overlay(meta: ImageMeta, result: ResultData, out_path: Path,
                   background: Optional[np.ndarray] = None, dpi: int = 120) -> None:
    """Write an image with leaves tinted per plant plus base/tip markers."""
    h, w = meta.height, meta.width
    canvas = np.zeros((h, w, 3), dtype=np.float64)
    if background is not None:
        canvas = np.asarray(background, dtype=np.float64) / 255.0

    leaf_to_plant = {}
    for plant in result.plants:
        for lid in plant.leaf_ids:
            leaf_to_plant[lid] = plant.id
    for plant in result.plants:
        xs, ys = plant.mask.foreground_xy()
        canvas[ys, xs] = _plant_color(plant.id)[:3]
    # leaf boundaries brighten slightly so leaves stay distinguishable
    for leaf in result.leaves:
        xs, ys = leaf.mask.foreground_xy()
        color = np.asarray(_plant_color(leaf_to_plant.get(leaf.id, 0))[:3])
        canvas[ys, xs] = 0.65 * canvas[ys, xs] + 0.35 * color

    fig, ax = plt.subplots(figsize=(w / dpi, h / dpi), dpi=dpi)
    ax.imshow(np.clip(canvas, 0, 1), interpolation="nearest")
    for stem in result.stems:
        ax.plot([stem.base[0], stem.tip[0]], [stem.base[1], stem.tip[1]],
                color="white", linewidth=0.8, alpha=0.8)
        ax.plot(stem.base[0], stem.base[1], marker="o", markersize=3, color="red")
        ax.plot(stem.tip[0], stem.tip[1], marker="x", markersize=3, color="deepskyblue")
    ax.set_axis_off()
    fig.subplots_adjust(left=0, right=1, top=1, bottom=0)
    fig.savefig(out_path, dpi=dpi)
    plt.close(fig)


def render_metrics_figure(report: MetricsReport, out_path: Path) -> None:
    """Bar chart of the headline metrics next to per-level counts."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    names = ["prec50", "rec50", "ap50", "pq_plant", "pq_leaf"]
    values = [report.prec50, report.rec50, report.ap50, report.pq_plant, report.pq_leaf]
    ax1.bar(names, values, color="seagreen")
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("score")
    ax1.set_title("headline metrics")
    ax1.tick_params(axis="x", rotation=30)

    counts = {
        "plant": (report.plant.tp, report.plant.fp, report.plant.fn),
        "leaf": (report.leaf.tp, report.leaf.fp, report.leaf.fn),
    }
    x = np.arange(3)
    width = 0.35
    for i, (level, (tp, fp, fn)) in enumerate(counts.items()):
        ax2.bar(x + i * width, [tp, fp, fn], width, label=level)
    ax2.set_xticks(x + width / 2)
    ax2.set_xticklabels(["TP", "FP", "FN"])
    ax2.legend()
    ax2.set_title("match counts")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
