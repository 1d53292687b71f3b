"""Stem keypoint extraction: leaf cropping, attention aggregation, weighted
least-squares line fitting, mask clipping and base/tip selection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import cv2
import numpy as np

from .errors import DegenerateAttentionError, SchemaError, StemMissError
from .model import (
    AttentionMap,
    CropTransform,
    ImageMeta,
    LeafInstance,
    PipelineConfig,
    Point,
    StemLine,
    euclidean,
)

_EPS = 1e-12


@dataclass
class MultiResAttention:
    """Raw per-level stem-response grids for one leaf, any resolutions."""

    leaf_id: int
    levels: List[np.ndarray]

    def __post_init__(self) -> None:
        if not self.levels:
            raise SchemaError(f"leaf {self.leaf_id}: no attention levels")
        self.levels = [np.asarray(lv, dtype=np.float64) for lv in self.levels]
        for lv in self.levels:
            if lv.ndim != 2 or lv.size == 0:
                raise SchemaError(f"leaf {self.leaf_id}: attention level must be a non-empty 2D grid")
            if np.any(lv < 0):
                raise SchemaError(f"leaf {self.leaf_id}: negative attention value")


def crop_leaf(leaf: LeafInstance, meta: ImageMeta,
              cfg: PipelineConfig) -> Tuple[CropTransform, np.ndarray]:
    """Square crop around the leaf plus its mask resampled to the attention grid.

    The tight bounding box is zero-padded to a square (pad split evenly,
    extra pixel to the right/bottom) and scaled to crop_size. Each foreground
    pixel marks the grid cell its center falls into.
    """
    x0, y0, w, h = leaf.mask.bbox()
    side = max(w, h)
    pad_left = (side - w) // 2
    pad_top = (side - h) // 2
    scale = cfg.crop_size / side
    t = CropTransform(
        bbox=(x0, y0, w, h),
        pad=(pad_left * scale, pad_top * scale),
        scale=scale,
        crop_size=cfg.crop_size,
        grid_size=cfg.attention_grid,
    )
    g = cfg.attention_grid
    xs, ys = leaf.mask.foreground_xy()
    gx = np.floor((xs - x0 + pad_left + 0.5) * g / side).astype(np.int64)
    gy = np.floor((ys - y0 + pad_top + 0.5) * g / side).astype(np.int64)
    grid = np.zeros((g, g), dtype=bool)
    grid[np.clip(gy, 0, g - 1), np.clip(gx, 0, g - 1)] = True
    return t, grid


def aggregate_attention(m: MultiResAttention, cfg: PipelineConfig) -> AttentionMap:
    """Bilinearly resize every level to the attention grid, average, and
    min-max normalize to [0, 1]. Constant maps carry no ridge and raise."""
    g = cfg.attention_grid
    acc = np.zeros((g, g), dtype=np.float64)
    for lv in m.levels:
        if lv.shape == (g, g):
            acc += lv
        else:
            acc += cv2.resize(lv, (g, g), interpolation=cv2.INTER_LINEAR)
    acc /= len(m.levels)
    lo, hi = float(acc.min()), float(acc.max())
    if hi - lo <= _EPS:
        raise DegenerateAttentionError(f"leaf {m.leaf_id}: constant attention map")
    return AttentionMap(values=(acc - lo) / (hi - lo), leaf_id=m.leaf_id)


def weighted_centroid(f: AttentionMap) -> Point:
    """Value-weighted mean of cell-center coordinates, as (x, y)."""
    total = float(f.values.sum())
    if total <= _EPS:
        raise DegenerateAttentionError(f"leaf {f.leaf_id}: zero attention mass")
    rows, cols = np.indices(f.values.shape)
    cx = float((cols * f.values).sum() / total)
    cy = float((rows * f.values).sum() / total)
    return (cx, cy)


def _wls_solve(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, float]:
    """Solve min ||W^1/2 ([1 a] x - b)||^2 via the 2x2 normal equations."""
    sw = w.sum()
    sa = (w * a).sum()
    saa = (w * a * a).sum()
    sb = (w * b).sum()
    sab = (w * a * b).sum()
    m = np.array([[sw, sa], [sa, saa]])
    rhs = np.array([sb, sab])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    norm = max(abs(m).max(), _EPS)
    if abs(det) <= 1e-12 * norm * norm:
        raise np.linalg.LinAlgError("singular normal matrix")
    x = np.linalg.solve(m, rhs)
    resid = x[0] + x[1] * a - b
    return x, float((w * resid * resid).sum())


def fit_wls_line(f: AttentionMap) -> StemLine:
    """Fit a stem line treating every grid cell as a sample weighted by its
    attention value.

    The fit is done in both axis orders (x as a function of y and vice
    versa) and the orientation with the smaller weighted residual wins; this
    keeps near-vertical and near-horizontal stems exactly representable.
    """
    v = f.values
    if int((v > 0).sum()) < 2:
        raise DegenerateAttentionError(f"leaf {f.leaf_id}: fewer than 2 weighted cells")
    rows, cols = np.indices(v.shape)
    y = rows.ravel().astype(np.float64)
    x = cols.ravel().astype(np.float64)
    w = v.ravel()
    fits = []
    try:
        sol, j = _wls_solve(y, x, w)  # x = x1 + x2 * y
        fits.append(StemLine(orient="x_of_y", intercept=float(sol[0]),
                             slope=float(sol[1]), residual=j))
    except np.linalg.LinAlgError:
        pass
    try:
        sol, j = _wls_solve(x, y, w)  # y = x1 + x2 * x
        fits.append(StemLine(orient="y_of_x", intercept=float(sol[0]),
                             slope=float(sol[1]), residual=j))
    except np.linalg.LinAlgError:
        pass
    if not fits:
        raise DegenerateAttentionError(f"leaf {f.leaf_id}: attention mass is collinear-degenerate")
    return min(fits, key=lambda ln: ln.residual)


def clip_segment_to_mask(line: StemLine, mask_grid: np.ndarray,
                         step: float = 0.25) -> Tuple[Point, Point]:
    """First and last line samples whose cell (or any 8-neighbor) is foreground.

    The 8-neighbor tolerance survives raggedness of the downsampled mask.
    """
    grid = np.asarray(mask_grid, dtype=bool)
    g = grid.shape[0]
    if not grid.any():
        raise StemMissError("empty mask grid")
    dilated = cv2.dilate(grid.astype(np.uint8), np.ones((3, 3), np.uint8)).astype(bool)
    ts = np.arange(0.0, g - 1 + 1e-9, step)
    if line.orient == "x_of_y":
        ys = ts
        xs = line.intercept + line.slope * ts
    else:
        xs = ts
        ys = line.intercept + line.slope * ts
    inside = (xs > -0.5) & (xs < g - 0.5) & (ys > -0.5) & (ys < g - 0.5)
    xs, ys = xs[inside], ys[inside]
    if xs.size == 0:
        raise StemMissError("line lies outside the grid")
    cy = np.clip(np.rint(ys).astype(int), 0, g - 1)
    cx = np.clip(np.rint(xs).astype(int), 0, g - 1)
    hits = np.flatnonzero(dilated[cy, cx])
    if hits.size == 0:
        raise StemMissError("line misses the mask")
    e1 = (float(xs[hits[0]]), float(ys[hits[0]]))
    e2 = (float(xs[hits[-1]]), float(ys[hits[-1]]))
    if e1 == e2:
        raise StemMissError("clipped segment degenerates to a point")
    return e1, e2


def select_base_point(e1: Point, e2: Point, centroid: Point) -> Tuple[Point, Point]:
    """Order endpoints as (base, tip); the base sits closer to the attention
    centroid. Exact ties resolve to the lower-(y, x) endpoint."""
    d1 = euclidean(e1, centroid)
    d2 = euclidean(e2, centroid)
    if d1 < d2:
        return e1, e2
    if d2 < d1:
        return e2, e1
    k1 = (e1[1], e1[0])
    k2 = (e2[1], e2[0])
    return (e1, e2) if k1 <= k2 else (e2, e1)


def to_global(t: CropTransform, p: Point) -> Point:
    return t.to_global(p)
