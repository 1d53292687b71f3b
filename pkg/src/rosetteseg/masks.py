"""Run-length encoded binary masks and elementary mask algebra.

Masks are encoded row-major with alternating background/foreground runs.
The first run counts background pixels and may be zero; no other run may
be zero. This differs from the COCO convention (column-major); adapters
feeding external data must convert.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import MaskAlgebraError, SchemaError


@dataclass
class BinaryMask:
    """Bitmap over a ``width x height`` grid stored as run lengths."""

    width: int
    height: int
    runs: Tuple[int, ...]

    # lazily decoded foreground pixel indices (row-major flat), cached
    _indices: np.ndarray = field(default=None, repr=False, compare=False)
    # runs as an int64 array, kept to avoid repeated tuple conversion
    _runs_arr: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise SchemaError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        try:
            arr = np.asarray(self.runs, dtype=np.int64)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"malformed run lengths: {exc}") from exc
        if arr.ndim != 1:
            raise SchemaError("run lengths must be a flat sequence")
        self.runs = tuple(arr.tolist())
        self._runs_arr = arr
        total = int(arr.sum())
        if total != self.width * self.height:
            raise SchemaError(
                f"runs sum to {total}, expected {self.width * self.height} "
                f"for a {self.width}x{self.height} mask"
            )
        if (arr < 0).any():
            raise SchemaError("negative run length")
        if (arr[1:] == 0).any():
            raise SchemaError("only the leading background run may be zero")

    @classmethod
    def from_array(cls, bitmap: np.ndarray) -> "BinaryMask":
        """Encode a 2D boolean array (rows = y, cols = x)."""
        arr = np.asarray(bitmap, dtype=bool)
        if arr.ndim != 2:
            raise SchemaError(f"expected a 2D bitmap, got ndim={arr.ndim}")
        h, w = arr.shape
        flat = arr.ravel()
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds)
        if flat[0]:
            runs = np.concatenate(([0], runs))
        # constructed runs are valid by construction; skip re-validation
        mask = cls.__new__(cls)
        mask.width = w
        mask.height = h
        mask._runs_arr = runs.astype(np.int64, copy=False)
        mask._indices = None
        # the runs tuple materializes lazily on first attribute access
        return mask

    def __getattr__(self, name):
        if name == "runs":
            runs = tuple(self._runs_arr.tolist())
            self.runs = runs
            return runs
        raise AttributeError(name)

    def to_array(self) -> np.ndarray:
        """Decode to a 2D boolean array of shape (height, width)."""
        values = np.zeros(self._runs_arr.size, dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, self._runs_arr)
        return flat.reshape(self.height, self.width)

    def foreground_indices(self) -> np.ndarray:
        """Sorted row-major flat indices of foreground pixels."""
        if self._indices is None:
            runs = self._runs_arr
            ends = np.cumsum(runs)
            starts = ends - runs
            fg_starts = starts[1::2]
            fg_lens = runs[1::2]
            if fg_lens.size == 0:
                self._indices = np.empty(0, dtype=np.int64)
            else:
                offsets = np.repeat(fg_starts, fg_lens)
                within = np.arange(fg_lens.sum()) - np.repeat(
                    np.cumsum(fg_lens) - fg_lens, fg_lens
                )
                self._indices = offsets + within
        return self._indices

    @property
    def area(self) -> int:
        return int(self._runs_arr[1::2].sum())

    def foreground_xy(self) -> Tuple[np.ndarray, np.ndarray]:
        """Foreground pixel coordinates as (xs, ys) integer arrays."""
        idx = self.foreground_indices()
        return idx % self.width, idx // self.width

    def bbox(self) -> Tuple[int, int, int, int]:
        """Tight foreground bounding box (x0, y0, w, h)."""
        xs, ys = self.foreground_xy()
        if xs.size == 0:
            raise MaskAlgebraError("bbox of an empty mask is undefined")
        x0, y0 = int(xs.min()), int(ys.min())
        return x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1

    def to_rle_dict(self) -> dict:
        return {"w": self.width, "h": self.height, "runs": list(self.runs)}

    @classmethod
    def from_rle_dict(cls, d: dict) -> "BinaryMask":
        try:
            return cls(width=int(d["w"]), height=int(d["h"]), runs=tuple(d["runs"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed rle object: {exc}") from exc


def rle_encode(bitmap: np.ndarray) -> BinaryMask:
    """Losslessly encode a boolean grid."""
    return BinaryMask.from_array(bitmap)


def rle_decode(mask: BinaryMask) -> np.ndarray:
    return mask.to_array()


def _check_same_dims(a: BinaryMask, b: BinaryMask) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise SchemaError(
            f"mask dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    _check_same_dims(a, b)
    ia, ib = a.foreground_indices(), b.foreground_indices()
    if ia.size == 0 or ib.size == 0:
        return 0
    # bbox prefilter: disjoint index ranges cannot intersect
    if ia[-1] < ib[0] or ib[-1] < ia[0]:
        return 0
    return int(np.intersect1d(ia, ib, assume_unique=True).size)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; undefined (raises) when both masks are empty."""
    _check_same_dims(a, b)
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        raise MaskAlgebraError("IoU of two empty masks is undefined")
    return inter / union


def mask_containment(a: BinaryMask, b: BinaryMask) -> float:
    """|A∩B| / min(|A|, |B|); undefined when either mask is empty."""
    _check_same_dims(a, b)
    smaller = min(a.area, b.area)
    if smaller == 0:
        raise MaskAlgebraError("containment with an empty mask is undefined")
    return intersection_area(a, b) / smaller


def mask_union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_dims(a, b)
    merged = np.union1d(a.foreground_indices(), b.foreground_indices())
    return mask_from_indices(merged, a.width, a.height)


def mask_from_indices(indices: np.ndarray, width: int, height: int) -> BinaryMask:
    flat = np.zeros(width * height, dtype=bool)
    flat[indices] = True
    return BinaryMask.from_array(flat.reshape(height, width))
