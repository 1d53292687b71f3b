"""Writers for the interchange formats.

These mirror the pipeline's readers but are implemented independently: the
on-disk format is the contract between the two packages.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_f32grid(path: Path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"f32grid requires a 2D array, got ndim={arr.ndim}")
    header = struct.pack("<II", arr.shape[0], arr.shape[1])
    atomic_write_bytes(path, header + arr.tobytes())


def rle_from_array(bitmap: np.ndarray) -> dict:
    """Row-major RLE, alternating background/foreground; the leading
    background run may be zero."""
    arr = np.asarray(bitmap, dtype=bool)
    h, w = arr.shape
    flat = arr.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return {"w": int(w), "h": int(h), "runs": [int(r) for r in runs]}
