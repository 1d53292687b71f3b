"""Procedural rosette-scene generator with exact ground truth.

Plants are placed by rejection sampling with a minimum pairwise center
separation. Each leaf is an elliptical blade whose inner focus sits at
petiole distance from the plant center; the true base point is the blade's
inner vertex and the true tip its outer vertex. Attention grids carry a
Gaussian ridge along the base-tip axis whose amplitude decays toward the
tip, so the weighted centroid lands nearer the base.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import cv2
import numpy as np

from .errors import SpecInfeasibleError
from .masks import BinaryMask, mask_containment, mask_from_indices, mask_iou, mask_union
from .model import ImageMeta, LeafInstance, PipelineConfig, Point
from .sceneio import SCHEMA_VERSION, atomic_write_text, canonical_dumps, write_f32grid
from .stems import crop_leaf
from .tiling import Window, plan_windows

MAX_ATTEMPTS = 100_000
RIDGE_SIGMA = 6.0  # in attention-grid cells
RIDGE_TIP_AMPLITUDE = 0.4


@dataclass
class SceneSpec:
    image_size: int = 1000
    plants: int = 10
    center_separation_eps: float = 4.0  # in units of eps
    eps: float = 40.0
    leaves_per_plant: Tuple[int, int] = (3, 8)
    leaf_length: Tuple[float, float] = (17.0, 30.0)  # semi-major axis
    leaf_width: Tuple[float, float] = (7.0, 12.0)  # semi-minor axis
    petiole_length: Tuple[float, float] = (10.0, 18.0)
    duplicate_prob: float = 0.0
    boundary_prob: float = 0.0
    attention_noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.center_separation_eps < 0 or self.eps <= 0:
            raise SpecInfeasibleError("separation and eps must be non-negative/positive")
        for p in (self.duplicate_prob, self.boundary_prob):
            if not 0.0 <= p <= 1.0:
                raise SpecInfeasibleError(f"probability {p} outside [0, 1]")
        if self.plants < 0 or self.attention_noise < 0:
            raise SpecInfeasibleError("plants and attention_noise must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrueLeaf:
    gt_id: int
    plant_id: int
    mask: BinaryMask
    base: Point
    tip: Point


class _Budget:
    def __init__(self, limit: int) -> None:
        self.limit = limit
        self.used = 0

    def spend(self, what: str) -> None:
        self.used += 1
        if self.used > self.limit:
            raise SpecInfeasibleError(
                f"rejection sampling exceeded {self.limit} attempts while sampling {what}"
            )


def _rasterize_ellipse(center: Point, angle: float, a: float, b: float,
                       size: int) -> np.ndarray:
    """Foreground flat indices of the ellipse on the image grid."""
    ex, ey = center
    r = a + 2.0
    x0 = max(int(ex - r), 0)
    x1 = min(int(ex + r) + 1, size)
    y0 = max(int(ey - r), 0)
    y1 = min(int(ey + r) + 1, size)
    xs, ys = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    dx = xs + 0.5 - ex
    dy = ys + 0.5 - ey
    ca, sa = math.cos(angle), math.sin(angle)
    u = dx * ca + dy * sa
    v = -dx * sa + dy * ca
    inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return (ys[inside].astype(np.int64) * size + xs[inside]).ravel()


def _sample_centers(spec: SceneSpec, rng: np.random.Generator, margin: float,
                    budget: _Budget) -> List[Point]:
    lo, hi = margin, spec.image_size - margin
    if spec.plants > 0 and hi <= lo:
        raise SpecInfeasibleError("image too small for the requested leaf geometry")
    sep = spec.center_separation_eps * spec.eps
    centers: List[Point] = []
    while len(centers) < spec.plants:
        budget.spend("plant centers")
        c = (float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi)))
        if all(math.hypot(c[0] - o[0], c[1] - o[1]) >= sep for o in centers):
            centers.append(c)
    return centers


def _sample_plant_leaves(spec: SceneSpec, rng: np.random.Generator, center: Point,
                         plant_id: int, next_gt_id: int, extent_cap: float,
                         budget: _Budget) -> List[TrueLeaf]:
    n = int(rng.integers(spec.leaves_per_plant[0], spec.leaves_per_plant[1] + 1))
    offset = float(rng.uniform(0.0, 2.0 * math.pi))
    jitter = 0.3 * math.pi / max(n, 1)
    leaves: List[TrueLeaf] = []
    for k in range(n):
        angle0 = offset + 2.0 * math.pi * k / n
        for _ in range(200):
            budget.spend("leaf shapes")
            angle = angle0 + float(rng.uniform(-jitter, jitter))
            a = float(rng.uniform(*spec.leaf_length))
            b = float(rng.uniform(*spec.leaf_width))
            p = float(rng.uniform(*spec.petiole_length))
            b = min(b, a - 1.0)
            c = math.sqrt(a * a - b * b)
            if p + c + a > extent_cap:
                a = max((extent_cap - p) / 2.0, 6.0)
                b = min(b, a - 1.0)
                c = math.sqrt(a * a - b * b)
            dirx, diry = math.cos(angle), math.sin(angle)
            ecx = center[0] + (p + c) * dirx
            ecy = center[1] + (p + c) * diry
            idx = _rasterize_ellipse((ecx, ecy), angle, a, b, spec.image_size)
            if idx.size == 0:
                continue
            mask = mask_from_indices(idx, spec.image_size, spec.image_size)
            # keep sibling blades distinguishable for NMS
            ok = True
            for other in leaves:
                iou = mask_iou(mask, other.mask)
                if iou >= 0.5 or mask_containment(mask, other.mask) >= 0.8:
                    ok = False
                    break
            if not ok:
                continue
            base = (center[0] + (p + c - a) * dirx, center[1] + (p + c - a) * diry)
            tip = (center[0] + (p + c + a) * dirx, center[1] + (p + c + a) * diry)
            leaves.append(TrueLeaf(gt_id=next_gt_id + len(leaves), plant_id=plant_id,
                                   mask=mask, base=base, tip=tip))
            break
        else:
            raise SpecInfeasibleError("could not place a non-overlapping leaf")
    return leaves


def _window_relation(mask: BinaryMask, w: Window) -> str:
    """'inside' (fully interior), 'partial' (cut by the window) or 'outside'."""
    xs, ys = mask.foreground_xy()
    ox, oy = w.origin
    in_x = (xs >= ox) & (xs < ox + w.width)
    in_y = (ys >= oy) & (ys < oy + w.height)
    inside = in_x & in_y
    if not inside.any():
        return "outside"
    if not inside.all():
        return "partial"
    lx, ly = xs - ox, ys - oy
    if lx.min() == 0 or ly.min() == 0 or lx.max() == w.width - 1 or ly.max() == w.height - 1:
        return "partial"
    return "inside"


def _window_local_mask(mask: BinaryMask, w: Window) -> Optional[BinaryMask]:
    xs, ys = mask.foreground_xy()
    ox, oy = w.origin
    keep = (xs >= ox) & (xs < ox + w.width) & (ys >= oy) & (ys < oy + w.height)
    if not keep.any():
        return None
    lx, ly = xs[keep] - ox, ys[keep] - oy
    return mask_from_indices(ly.astype(np.int64) * w.width + lx, w.width, w.height)


def _attention_levels(leaf_mask: BinaryMask, base: Point, tip: Point,
                      meta: ImageMeta, cfg: PipelineConfig,
                      noise_sigma: float, rng: np.random.Generator) -> List[np.ndarray]:
    t, _ = crop_leaf(LeafInstance(id=0, mask=leaf_mask, score=1.0), meta, cfg)
    bg = t.to_grid(base)
    tg = t.to_grid(tip)
    g = cfg.attention_grid
    sizes = [cfg.crop_size // d for d in (8, 16, 32, 64)]
    levels = []
    dx, dy = tg[0] - bg[0], tg[1] - bg[1]
    seg_len2 = max(dx * dx + dy * dy, 1e-9)
    for r in sizes:
        cols, rows = np.meshgrid(np.arange(r), np.arange(r))
        gx = (cols + 0.5) * g / r - 0.5
        gy = (rows + 0.5) * g / r - 0.5
        tpar = np.clip(((gx - bg[0]) * dx + (gy - bg[1]) * dy) / seg_len2, 0.0, 1.0)
        px = bg[0] + tpar * dx
        py = bg[1] + tpar * dy
        dist2 = (gx - px) ** 2 + (gy - py) ** 2
        amp = 1.0 - (1.0 - RIDGE_TIP_AMPLITUDE) * tpar
        values = amp * np.exp(-dist2 / (2.0 * RIDGE_SIGMA ** 2))
        if noise_sigma > 0:
            values = values + rng.normal(0.0, noise_sigma, values.shape)
        levels.append(np.clip(values, 0.0, None).astype(np.float32))
    return levels


def _erode_local(mask: BinaryMask) -> BinaryMask:
    arr = mask.to_array().astype(np.uint8)
    eroded = cv2.erode(arr, np.ones((3, 3), np.uint8))
    if eroded.sum() == 0:
        return mask
    return BinaryMask.from_array(eroded.astype(bool))


def generate_scene(spec: SceneSpec,
                   cfg: Optional[PipelineConfig] = None
                   ) -> Tuple[dict, Dict[str, np.ndarray], dict]:
    """Build (scene document, attention files, ground-truth document).

    Attention files are keyed by file name relative to the scene's
    attention_dir. The whole construction is a pure function of the spec.
    """
    cfg = cfg or PipelineConfig(eps=spec.eps)
    rng = np.random.default_rng(spec.seed)
    budget = _Budget(MAX_ATTEMPTS)

    sep = spec.center_separation_eps * spec.eps
    extent_cap = max(sep / 2.0 - 2.0, 40.0) if spec.plants > 1 else 80.0
    extent_cap = min(extent_cap, 80.0)
    margin = extent_cap + 4.0

    centers = _sample_centers(spec, rng, margin, budget)
    leaves: List[TrueLeaf] = []
    for pid, center in enumerate(centers):
        leaves.extend(_sample_plant_leaves(spec, rng, center, pid, len(leaves),
                                           extent_cap, budget))

    meta = ImageMeta(width=spec.image_size, height=spec.image_size,
                     source_id=f"synthetic-{spec.seed}")
    windows = plan_windows(meta, cfg)

    candidates: List[dict] = []
    attention: Dict[str, np.ndarray] = {}
    next_id = 0

    def emit_attention(cid: int, global_mask: BinaryMask, leaf: TrueLeaf) -> None:
        levels = _attention_levels(global_mask, leaf.base, leaf.tip, meta, cfg,
                                   spec.attention_noise, rng)
        for k, lv in enumerate(levels):
            attention[f"att_{cid}_L{k}.f32grid"] = lv

    for leaf in leaves:
        full_candidates = []
        for w in windows:
            rel = _window_relation(leaf.mask, w)
            if rel == "inside":
                local = _window_local_mask(leaf.mask, w)
                cid = next_id
                next_id += 1
                candidates.append({
                    "id": cid,
                    "window_id": w.id,
                    "score": round(float(rng.uniform(0.85, 0.99)), 6),
                    "class_scores": {"green leaf": 0.9, "soil": 0.1},
                    "rle": local.to_rle_dict(),
                })
                emit_attention(cid, leaf.mask, leaf)
                full_candidates.append((cid, w))
            elif rel == "partial" and spec.boundary_prob > 0:
                if rng.uniform() < spec.boundary_prob:
                    local = _window_local_mask(leaf.mask, w)
                    if local is None:
                        continue
                    cid = next_id
                    next_id += 1
                    candidates.append({
                        "id": cid,
                        "window_id": w.id,
                        "score": round(float(rng.uniform(0.85, 0.99)), 6),
                        "class_scores": {"green leaf": 0.9, "soil": 0.1},
                        "rle": local.to_rle_dict(),
                    })
        if not full_candidates:
            raise SpecInfeasibleError(
                f"leaf {leaf.gt_id} is not fully interior to any window"
            )
        if spec.duplicate_prob > 0 and rng.uniform() < spec.duplicate_prob:
            src_cid, w = full_candidates[0]
            src = next(c for c in candidates if c["id"] == src_cid)
            local = BinaryMask.from_rle_dict(src["rle"])
            dup_local = _erode_local(local) if rng.uniform() < 0.5 else local
            cid = next_id
            next_id += 1
            candidates.append({
                "id": cid,
                "window_id": w.id,
                "score": round(float(rng.uniform(0.5, 0.8)), 6),
                "class_scores": {"green leaf": 0.9, "soil": 0.1},
                "rle": dup_local.to_rle_dict(),
            })
            xs, ys = dup_local.foreground_xy()
            gmask = mask_from_indices(
                (ys + w.origin[1]).astype(np.int64) * meta.width + xs + w.origin[0],
                meta.width, meta.height)
            emit_attention(cid, gmask, leaf)

    scene_doc = {
        "schema_version": SCHEMA_VERSION,
        "image": {"width": meta.width, "height": meta.height, "source_id": meta.source_id},
        "candidates": candidates,
        "attention_dir": "attention",
    }

    gt_doc = _ground_truth_document(meta, leaves, centers)
    return scene_doc, attention, gt_doc


def _ground_truth_document(meta: ImageMeta, leaves: List[TrueLeaf],
                           centers: List[Point]) -> dict:
    by_plant: Dict[int, List[TrueLeaf]] = {}
    for leaf in leaves:
        by_plant.setdefault(leaf.plant_id, []).append(leaf)
    plants = []
    for pid in sorted(by_plant):
        members = by_plant[pid]
        union = members[0].mask
        for m in members[1:]:
            union = mask_union(union, m.mask)
        bases = np.asarray([m.base for m in members])
        plants.append({
            "id": pid,
            "leaf_ids": sorted(m.gt_id for m in members),
            "center": [float(bases[:, 0].mean()), float(bases[:, 1].mean())],
            "rle": union.to_rle_dict(),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "image": {"width": meta.width, "height": meta.height, "source_id": meta.source_id},
        "leaves": [
            {"id": lf.gt_id, "score": 1.0, "rle": lf.mask.to_rle_dict()}
            for lf in sorted(leaves, key=lambda lf: lf.gt_id)
        ],
        "stems": [
            {"leaf_id": lf.gt_id, "base": [lf.base[0], lf.base[1]],
             "tip": [lf.tip[0], lf.tip[1]]}
            for lf in sorted(leaves, key=lambda lf: lf.gt_id)
        ],
        "plants": plants,
    }


def write_scene(outdir: Path, scene_doc: dict, attention: Dict[str, np.ndarray],
                gt_doc: dict) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    att_dir = outdir / scene_doc["attention_dir"]
    att_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(outdir / "scene.json", canonical_dumps(scene_doc))
    atomic_write_text(outdir / "gt.json", canonical_dumps(gt_doc))
    for name in sorted(attention):
        write_f32grid(att_dir / name, attention[name])
