"""Interchange formats: scene/result JSON documents and .f32grid files.

Scene document:
    {"image": {"width", "height", "source_id"},
     "candidates": [{"id", "window_id", "score", "class_scores"?, "rle": {"w","h","runs"}}],
     "attention_dir": "relative/path"}

Attention files live in ``attention_dir`` and are named ``att_<id>.f32grid``
(single level) or ``att_<id>_L<k>.f32grid`` (multi-resolution levels,
k = 0..). Binary layout: two little-endian uint32 (rows, cols) followed by
rows*cols little-endian float32, row-major.

Result / ground-truth document:
    {"image": {...}, "leaves": [...], "stems": [...], "plants": [...]}

Documents are serialized canonically (sorted keys, compact separators,
shortest round-trip floats) so identical content yields identical bytes.
"""
from __future__ import annotations

import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import SchemaError
from .masks import BinaryMask
from .model import (
    CandidateMask,
    ImageMeta,
    LeafInstance,
    PlantInstance,
    StemLine,
    StemSegment,
)

SCHEMA_VERSION = "1"

_ATT_NAME = re.compile(r"^att_(\d+)(?:_L(\d+))?\.f32grid$")


def canonical_dumps(doc: object) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_f32grid(path: Path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f4"))
    if arr.ndim != 2:
        raise SchemaError("f32grid payload must be 2D")
    header = struct.pack("<II", arr.shape[0], arr.shape[1])
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(arr.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_f32grid(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise SchemaError(f"{path}: truncated f32grid header")
    rows, cols = struct.unpack("<II", data[:8])
    expected = 8 + 4 * rows * cols
    if len(data) != expected:
        raise SchemaError(f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=8).reshape(rows, cols).astype(np.float64)


@dataclass
class SceneData:
    meta: ImageMeta
    candidates: List[CandidateMask]
    attention: Dict[int, List[Path]]  # candidate id -> level files, ascending level
    attention_dir: Optional[Path]


def _mask_from_rle(d: dict, owner: str) -> BinaryMask:
    try:
        return BinaryMask.from_rle_dict(d)
    except SchemaError as exc:
        raise SchemaError(f"{owner}: {exc}") from exc


def load_scene(path: Path) -> SceneData:
    """Parse and validate a scene document plus its attention-map files."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("image", "candidates"):
        if key not in doc:
            raise SchemaError(f"{path}: missing field {key!r}")
    img = doc["image"]
    try:
        meta = ImageMeta(width=int(img["width"]), height=int(img["height"]),
                         source_id=str(img.get("source_id", "")))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed image object: {exc}") from exc

    candidates: List[CandidateMask] = []
    seen = set()
    for entry in doc["candidates"]:
        try:
            cid = int(entry["id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: candidate without a valid id: {exc}") from exc
        if cid in seen:
            raise SchemaError(f"{path}: duplicate candidate id {cid}")
        seen.add(cid)
        mask = _mask_from_rle(entry.get("rle", {}), f"candidate {cid}")
        class_scores = entry.get("class_scores")
        if class_scores is not None:
            class_scores = {str(k): float(v) for k, v in class_scores.items()}
        candidates.append(CandidateMask(
            id=cid,
            mask=mask,
            score=float(entry.get("score", 1.0)),
            window_id=int(entry.get("window_id", 0)),
            class_scores=class_scores,
        ))

    attention: Dict[int, List[Path]] = {}
    att_dir = None
    if doc.get("attention_dir"):
        att_dir = path.parent / doc["attention_dir"]
        if not att_dir.is_dir():
            raise SchemaError(f"{path}: attention_dir {att_dir} does not exist")
        by_id: Dict[int, List[Tuple[int, Path]]] = {}
        for f in sorted(att_dir.iterdir()):
            m = _ATT_NAME.match(f.name)
            if not m:
                continue
            cid = int(m.group(1))
            level = int(m.group(2)) if m.group(2) is not None else 0
            if cid not in seen:
                raise SchemaError(f"{f}: dangling attention reference to candidate id {cid}")
            read_f32grid(f)  # validates header and payload length
            by_id.setdefault(cid, []).append((level, f))
        for cid, files in by_id.items():
            attention[cid] = [f for _, f in sorted(files)]
    return SceneData(meta=meta, candidates=candidates, attention=attention, attention_dir=att_dir)


def _stem_to_dict(s: StemSegment) -> dict:
    return {
        "leaf_id": s.leaf_id,
        "base": [s.base[0], s.base[1]],
        "tip": [s.tip[0], s.tip[1]],
        "line": {
            "orient": s.line.orient,
            "intercept": s.line.intercept,
            "slope": s.line.slope,
            "residual": s.line.residual,
        },
    }


def result_document(meta: ImageMeta,
                    leaves: Sequence[LeafInstance],
                    stems: Sequence[StemSegment],
                    plants: Sequence[PlantInstance]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "image": {"width": meta.width, "height": meta.height, "source_id": meta.source_id},
        "leaves": [
            {"id": lf.id, "score": lf.score, "rle": lf.mask.to_rle_dict()}
            for lf in sorted(leaves, key=lambda lf: lf.id)
        ],
        "stems": [_stem_to_dict(s) for s in sorted(stems, key=lambda s: s.leaf_id)],
        "plants": [
            {
                "id": p.id,
                "leaf_ids": sorted(p.leaf_ids),
                "center": [p.center[0], p.center[1]],
                "rle": p.mask.to_rle_dict(),
            }
            for p in sorted(plants, key=lambda p: p.id)
        ],
    }


def save_instances(path: Path, meta: ImageMeta,
                   leaves: Sequence[LeafInstance],
                   stems: Sequence[StemSegment],
                   plants: Sequence[PlantInstance]) -> None:
    atomic_write_text(Path(path), canonical_dumps(result_document(meta, leaves, stems, plants)))


@dataclass
class ResultData:
    meta: Optional[ImageMeta]
    leaves: List[LeafInstance]
    stems: List[StemSegment]
    plants: List[PlantInstance]


def load_result(path: Path) -> ResultData:
    """Parse a result or ground-truth document."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    meta = None
    if "image" in doc:
        img = doc["image"]
        meta = ImageMeta(width=int(img["width"]), height=int(img["height"]),
                         source_id=str(img.get("source_id", "")))
    leaves = []
    seen = set()
    for entry in doc.get("leaves", []):
        lid = int(entry["id"])
        if lid in seen:
            raise SchemaError(f"{path}: duplicate leaf id {lid}")
        seen.add(lid)
        leaves.append(LeafInstance(
            id=lid,
            mask=_mask_from_rle(entry["rle"], f"leaf {lid}"),
            score=float(entry.get("score", 1.0)),
        ))
    stems = []
    for entry in doc.get("stems", []):
        line = entry.get("line") or {"orient": "x_of_y", "intercept": 0.0, "slope": 0.0,
                                     "residual": 0.0}
        stems.append(StemSegment(
            leaf_id=int(entry["leaf_id"]),
            base=tuple(float(v) for v in entry["base"]),
            tip=tuple(float(v) for v in entry["tip"]),
            line=StemLine(orient=line["orient"], intercept=float(line["intercept"]),
                          slope=float(line["slope"]), residual=float(line["residual"])),
        ))
    plants = []
    seen_p = set()
    for entry in doc.get("plants", []):
        pid = int(entry["id"])
        if pid in seen_p:
            raise SchemaError(f"{path}: duplicate plant id {pid}")
        seen_p.add(pid)
        plants.append(PlantInstance(
            id=pid,
            leaf_ids=set(int(v) for v in entry["leaf_ids"]),
            mask=_mask_from_rle(entry["rle"], f"plant {pid}"),
            center=tuple(float(v) for v in entry.get("center", (0.0, 0.0))),
        ))
    return ResultData(meta=meta, leaves=leaves, stems=stems, plants=plants)
