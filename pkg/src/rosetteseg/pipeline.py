"""End-to-end scene processing: filter -> NMS -> stems -> grouping."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, List, Tuple

from . import __version__
from .errors import DegenerateAttentionError, SchemaError, StemMissError
from .grouping import assign_outliers, form_plants, greedy_cluster
from .model import (
    CandidateMask,
    LeafInstance,
    PipelineConfig,
    PlantInstance,
    Point,
    StemSegment,
)
from .sceneio import SceneData, read_f32grid, result_document
from .stems import (
    MultiResAttention,
    aggregate_attention,
    clip_segment_to_mask,
    crop_leaf,
    fit_wls_line,
    select_base_point,
    to_global,
    weighted_centroid,
)
from .tiling import classify_leaf, lift_and_reject, nms_merge, plan_windows


@dataclass
class PipelineOutput:
    leaves: List[LeafInstance]
    stems: List[StemSegment]
    plants: List[PlantInstance]
    result: dict
    manifest: dict


def _lift_candidates(scene: SceneData, cfg: PipelineConfig) -> List[CandidateMask]:
    windows = {w.id: w for w in plan_windows(scene.meta, cfg)}
    lifted: List[CandidateMask] = []
    for cand in scene.candidates:
        dims = (cand.mask.width, cand.mask.height)
        if dims == (scene.meta.width, scene.meta.height):
            lifted.append(cand)  # already global
            continue
        w = windows.get(cand.window_id)
        if w is None:
            raise SchemaError(f"candidate {cand.id}: unknown window id {cand.window_id}")
        if dims != (w.width, w.height):
            raise SchemaError(
                f"candidate {cand.id}: mask {dims[0]}x{dims[1]} matches neither the "
                f"image nor window {w.id}"
            )
        kept = lift_and_reject(cand, w, scene.meta)
        if kept is not None:
            lifted.append(kept)
    return lifted


def _extract_stems(leaves: List[LeafInstance], scene: SceneData,
                   cfg: PipelineConfig) -> Tuple[List[StemSegment], Dict[int, Point], Dict[int, Point]]:
    """Per-leaf stem fitting.

    Returns fitted stems, base points of fitted leaves, and pseudo base
    points (mask centroids) for leaves whose attention was degenerate or
    whose line missed the mask.
    """
    stems: List[StemSegment] = []
    bases: Dict[int, Point] = {}
    fallbacks: Dict[int, Point] = {}
    for leaf in sorted(leaves, key=lambda lf: lf.id):
        t, grid_mask = crop_leaf(leaf, scene.meta, cfg)
        level_files = scene.attention.get(leaf.id, [])
        try:
            if not level_files:
                raise DegenerateAttentionError(f"leaf {leaf.id}: no attention maps")
            att = MultiResAttention(leaf_id=leaf.id,
                                    levels=[read_f32grid(f) for f in level_files])
            agg = aggregate_attention(att, cfg)
            centroid = weighted_centroid(agg)
            line = fit_wls_line(agg)
            e1, e2 = clip_segment_to_mask(line, grid_mask)
            base_g, tip_g = select_base_point(e1, e2, centroid)
            base = to_global(t, base_g)
            tip = to_global(t, tip_g)
            stems.append(StemSegment(leaf_id=leaf.id, base=base, tip=tip, line=line))
            bases[leaf.id] = base
        except (DegenerateAttentionError, StemMissError):
            xs, ys = leaf.mask.foreground_xy()
            fallbacks[leaf.id] = (float(xs.mean()) + 0.5, float(ys.mean()) + 0.5)
    return stems, bases, fallbacks


def run_pipeline(scene: SceneData, cfg: PipelineConfig,
                 scene_path: str = "", out_path: str = "") -> PipelineOutput:
    timings: Dict[str, float] = {}

    t0 = time.perf_counter()
    lifted = _lift_candidates(scene, cfg)
    lifted = [c for c in lifted if classify_leaf(c)]
    timings["filter"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    leaves = nms_merge(lifted, cfg)
    timings["nms"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stems, bases, fallbacks = _extract_stems(leaves, scene, cfg)
    timings["stems"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    clusters, outliers = greedy_cluster(bases, cfg)
    outliers = dict(outliers)
    outliers.update(fallbacks)
    clusters = assign_outliers(outliers, clusters, cfg)
    plants = form_plants(clusters, leaves)
    timings["grouping"] = time.perf_counter() - t0

    result = result_document(scene.meta, leaves, stems, plants)
    manifest = {
        "tool_version": __version__,
        "config": cfg.to_dict(),
        "scene": scene_path,
        "output": out_path,
        "counts": {
            "candidates": len(scene.candidates),
            "leaves": len(leaves),
            "plants": len(plants),
        },
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    return PipelineOutput(leaves=leaves, stems=stems, plants=plants,
                          result=result, manifest=manifest)
