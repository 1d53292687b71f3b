from __future__ import annotations

from pathlib import Path
from typing import Dict, List

import cv2
import numpy as np

from .config import AdapterConfig
from .errors import AdapterError
from .formats import (
    SCHEMA_VERSION,
    atomic_write_text,
    canonical_dumps,
    rle_from_array,
    write_f32grid,
)
from .heuristic import attention_levels, plan_windows, window_candidates


def _load_image(path: Path) -> np.ndarray:
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise AdapterError(f"cannot read image {path}")
    return image


def extract_scene(image_path: Path, cfg: AdapterConfig, out_dir: Path) -> dict:
    """Run the model stage on one image and write scene.json plus one
    f32grid per leaf candidate and pyramid level.

    Everything is assembled in memory first; files land atomically, and
    scene.json is written last so a readable scene always has its attention
    files in place.
    """
    if cfg.backend == "foundation":
        from .foundation import load_models

        load_models(cfg)  # raises with diagnostics until models are wired up

    image = _load_image(Path(image_path))
    height, width = image.shape[:2]
    windows = plan_windows(width, height, cfg)

    candidates: List[dict] = []
    attention: Dict[str, np.ndarray] = {}
    next_id = 0
    for window in windows:
        for cand in window_candidates(image, window, cfg, next_id):
            next_id = cand.id + 1
            candidates.append({
                "id": cand.id,
                "window_id": cand.window_id,
                "score": cand.score,
                "class_scores": cand.class_scores,
                "rle": rle_from_array(cand.local_mask),
            })
            if cand.class_scores[cfg.leaf_prompt] > cand.class_scores[cfg.soil_prompt]:
                levels = attention_levels(cand, (width, height), cfg)
                for k, lv in enumerate(levels):
                    attention[f"att_{cand.id}_L{k}.f32grid"] = lv

    scene_doc = {
        "schema_version": SCHEMA_VERSION,
        "image": {"width": width, "height": height,
                  "source_id": Path(image_path).name},
        "candidates": candidates,
        "attention_dir": "attention",
    }

    out_dir = Path(out_dir)
    att_dir = out_dir / "attention"
    att_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(attention):
        write_f32grid(att_dir / name, attention[name])
    atomic_write_text(out_dir / "scene.json", canonical_dumps(scene_doc))
    return scene_doc
