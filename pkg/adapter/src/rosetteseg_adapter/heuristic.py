"""Deterministic CPU backend.

Candidates come from excess-green thresholding plus connected components per
window; class scores from mean excess-green inside the mask; attention grids
are a Gaussian ridge along the component's principal axis with amplitude
decaying toward the end farther from the image center (the rosette prior:
leaf bases face the plant, plants sit away from the image border less often
than leaves do). It exists so the full pipeline runs without GPU weights; a
foundation-model backend emits the same structures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import cv2
import numpy as np

from .config import AdapterConfig

RIDGE_SIGMA = 6.0  # attention-grid cells
RIDGE_TIP_AMPLITUDE = 0.4


@dataclass
class Window:
    id: int
    origin: Tuple[int, int]
    width: int
    height: int


@dataclass
class Candidate:
    id: int
    window_id: int
    score: float
    class_scores: dict
    local_mask: np.ndarray  # window-sized boolean array
    global_xy: Tuple[np.ndarray, np.ndarray]


def _axis_origins(extent: int, window: int, overlap: int) -> List[int]:
    if extent <= window:
        return [0]
    stride = window - overlap
    origins = list(range(0, extent - window, stride))
    origins.append(extent - window)
    return origins


def plan_windows(width: int, height: int, cfg: AdapterConfig) -> List[Window]:
    w = min(cfg.window, width)
    h = min(cfg.window, height)
    windows = []
    wid = 0
    for oy in _axis_origins(height, cfg.window, cfg.window_overlap):
        for ox in _axis_origins(width, cfg.window, cfg.window_overlap):
            windows.append(Window(id=wid, origin=(ox, oy), width=w, height=h))
            wid += 1
    return windows


def excess_green(image_bgr: np.ndarray) -> np.ndarray:
    b, g, r = [image_bgr[..., i].astype(np.float64) for i in range(3)]
    return 2.0 * g - r - b


def _class_scores(cfg: AdapterConfig, mean_exg: float) -> dict:
    # squash mean excess-green into a [0, 1] leaf likelihood
    leaf = 1.0 / (1.0 + math.exp(-(mean_exg - cfg.exg_threshold) / 25.0))
    return {cfg.leaf_prompt: round(leaf, 6), cfg.soil_prompt: round(1.0 - leaf, 6)}


def window_candidates(image_bgr: np.ndarray, window: Window,
                      cfg: AdapterConfig, next_id: int) -> Iterator[Candidate]:
    ox, oy = window.origin
    patch = image_bgr[oy:oy + window.height, ox:ox + window.width]
    exg = excess_green(patch)
    fg = (exg > cfg.exg_threshold).astype(np.uint8)
    fg = cv2.morphologyEx(fg, cv2.MORPH_OPEN, np.ones((3, 3), np.uint8))
    n, labels = cv2.connectedComponents(fg)
    for comp in range(1, n):
        mask = labels == comp
        area = int(mask.sum())
        if area < cfg.min_candidate_area:
            continue
        mean_exg = float(exg[mask].mean())
        # stability proxy: fraction of the component surviving a 1-px erosion
        eroded = cv2.erode(mask.astype(np.uint8), np.ones((3, 3), np.uint8))
        score = float(eroded.sum()) / area
        if score < cfg.granularity * 0.5:
            continue
        ys, xs = np.nonzero(mask)
        yield Candidate(
            id=next_id,
            window_id=window.id,
            score=round(score, 6),
            class_scores=_class_scores(cfg, mean_exg),
            local_mask=mask,
            global_xy=(xs + ox, ys + oy),
        )
        next_id += 1


def attention_levels(candidate: Candidate, image_size: Tuple[int, int],
                     cfg: AdapterConfig) -> Optional[List[np.ndarray]]:
    """Gaussian stem ridge along the component's principal axis, sampled at
    the four pyramid resolutions in shared attention-grid coordinates."""
    xs, ys = candidate.global_xy
    x0, y0 = int(xs.min()), int(ys.min())
    bw, bh = int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1
    side = max(bw, bh)
    pad_x = (side - bw) / 2.0
    pad_y = (side - bh) / 2.0
    grid = cfg.crop_size // 8
    # image pixel -> attention grid cell coordinates
    gx = (xs - x0 + pad_x + 0.5) * grid / side - 0.5
    gy = (ys - y0 + pad_y + 0.5) * grid / side - 0.5
    pts = np.stack([gx, gy], axis=1)
    mean = pts.mean(axis=0)
    centered = pts - mean
    if pts.shape[0] < 2:
        axis = np.array([1.0, 0.0])
    else:
        cov = centered.T @ centered
        _, vecs = np.linalg.eigh(cov)
        axis = vecs[:, -1]  # principal direction
    proj = centered @ axis
    lo, hi = float(proj.min()), float(proj.max())
    e1 = mean + lo * axis
    e2 = mean + hi * axis

    # base = the grid endpoint whose image-space preimage is nearer the
    # image center (rosette prior); tip = the other end
    def to_image(p):
        ix = (p[0] + 0.5) * side / grid - pad_x + x0
        iy = (p[1] + 0.5) * side / grid - pad_y + y0
        return ix, iy

    cx, cy = image_size[0] / 2.0, image_size[1] / 2.0
    d1 = math.hypot(*(np.subtract(to_image(e1), (cx, cy))))
    d2 = math.hypot(*(np.subtract(to_image(e2), (cx, cy))))
    base, tip = (e1, e2) if d1 <= d2 else (e2, e1)

    dxy = tip - base
    seg2 = max(float(dxy @ dxy), 1e-9)
    levels = []
    for r in cfg.level_sizes:
        cols, rows = np.meshgrid(np.arange(r), np.arange(r))
        lgx = (cols + 0.5) * grid / r - 0.5
        lgy = (rows + 0.5) * grid / r - 0.5
        t = np.clip(((lgx - base[0]) * dxy[0] + (lgy - base[1]) * dxy[1]) / seg2, 0.0, 1.0)
        px = base[0] + t * dxy[0]
        py = base[1] + t * dxy[1]
        dist2 = (lgx - px) ** 2 + (lgy - py) ** 2
        amp = 1.0 - (1.0 - RIDGE_TIP_AMPLITUDE) * t
        levels.append((amp * np.exp(-dist2 / (2.0 * RIDGE_SIGMA ** 2))).astype(np.float32))
    return levels
