"""Sliding-window planning, boundary rejection, leaf filtering and NMS."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, SchemaError
from .masks import (
    intersection_area,
    mask_containment,
    mask_from_indices,
    mask_iou,
    mask_union,
)
from .model import CandidateMask, ImageMeta, LeafInstance, PipelineConfig


@dataclass(frozen=True)
class Window:
    id: int
    origin: tuple  # (x, y) global pixels
    width: int
    height: int


def _axis_origins(extent: int, window: int, stride: int) -> List[int]:
    if window >= extent:
        return [0]
    origins = list(range(0, extent - window + 1, stride))
    if origins[-1] != extent - window:
        # shift the last window inward so it stays full-size
        origins.append(extent - window)
    return origins


def plan_windows(meta: ImageMeta, cfg: PipelineConfig) -> List[Window]:
    """Cover the image with full-size square windows at a fixed stride.

    Windows at the far edges are shifted inward rather than clipped, so the
    per-window upsampling scale stays uniform.
    """
    if cfg.window_overlap >= cfg.window:
        raise ConfigError(
            f"window_overlap ({cfg.window_overlap}) must be smaller than window ({cfg.window})"
        )
    if cfg.window > meta.width or cfg.window > meta.height:
        return [Window(id=0, origin=(0, 0), width=min(cfg.window, meta.width),
                       height=min(cfg.window, meta.height))]
    stride = cfg.window - cfg.window_overlap
    xs = _axis_origins(meta.width, cfg.window, stride)
    ys = _axis_origins(meta.height, cfg.window, stride)
    windows = []
    wid = 0
    for y in ys:
        for x in xs:
            windows.append(Window(id=wid, origin=(x, y), width=cfg.window, height=cfg.window))
            wid += 1
    return windows


def lift_and_reject(c: CandidateMask, w: Window, meta: ImageMeta) -> Optional[CandidateMask]:
    """Translate a window-local candidate to global coordinates.

    Returns None when any foreground pixel touches a window edge that is not
    also an image edge; such masks are fragments of instances cut by the
    window and reappear whole in a neighboring window.
    """
    if (c.mask.width, c.mask.height) != (w.width, w.height):
        raise SchemaError(
            f"candidate {c.id}: mask is {c.mask.width}x{c.mask.height}, "
            f"window {w.id} is {w.width}x{w.height}"
        )
    xs, ys = c.mask.foreground_xy()
    ox, oy = w.origin
    edges = (
        (xs.min() == 0, ox == 0),
        (xs.max() == w.width - 1, ox + w.width == meta.width),
        (ys.min() == 0, oy == 0),
        (ys.max() == w.height - 1, oy + w.height == meta.height),
    )
    for touches, is_image_edge in edges:
        if touches and not is_image_edge:
            return None
    gx, gy = xs + ox, ys + oy
    lifted = mask_from_indices(gy.astype(np.int64) * meta.width + gx,
                               meta.width, meta.height)
    return CandidateMask(id=c.id, mask=lifted, score=c.score,
                         window_id=w.id, class_scores=c.class_scores)


def classify_leaf(c: CandidateMask, pixels: Optional[np.ndarray] = None) -> bool:
    """Decide whether a candidate is a leaf.

    Prefers the adapter's text-prompt class scores ("green leaf" vs "soil").
    Falls back to the mean excess-green index over foreground pixels when an
    RGB grid is supplied, and keeps the candidate when neither is available.
    """
    scores = c.class_scores or {}
    if "green leaf" in scores and "soil" in scores:
        return scores["green leaf"] > scores["soil"]
    if pixels is not None:
        arr = np.asarray(pixels, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise SchemaError("pixel grid must be HxWx3 RGB")
        xs, ys = c.mask.foreground_xy()
        r = arr[ys, xs, 0]
        g = arr[ys, xs, 1]
        b = arr[ys, xs, 2]
        exg = 2.0 * g - r - b
        return float(exg.mean()) > 0.0
    return True


def nms_merge(candidates: Sequence[CandidateMask], cfg: PipelineConfig) -> List[LeafInstance]:
    """Deduplicate overlapping candidates into leaf instances.

    Candidates are visited in descending (score, area, -id) order. Against
    every kept instance: IoU >= nms_iou_threshold suppresses the candidate;
    otherwise containment >= containment_merge_threshold absorbs it into the
    kept mask's union. Anything else starts a new instance.
    """
    ordered = sorted(candidates, key=lambda c: (-c.score, -c.mask.area, c.id))
    kept: List[LeafInstance] = []
    for cand in ordered:
        absorbed = False
        for inst in kept:
            if intersection_area(cand.mask, inst.mask) == 0:
                continue
            if mask_iou(cand.mask, inst.mask) >= cfg.nms_iou_threshold:
                absorbed = True
                break
            if mask_containment(cand.mask, inst.mask) >= cfg.containment_merge_threshold:
                inst.mask = mask_union(inst.mask, cand.mask)
                absorbed = True
                break
        if not absorbed:
            kept.append(LeafInstance(id=cand.id, mask=cand.mask, score=cand.score))
    return kept
