"""Core domain types shared by the pipeline stages."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Dict, Optional, Set, Tuple

import numpy as np

from .errors import ConfigError, SchemaError
from .masks import BinaryMask

Point = Tuple[float, float]


@dataclass(frozen=True)
class ImageMeta:
    """Dimensions and identity of the source image; pixel data is optional
    and only needed by the color-based leaf filter and the renderer."""

    width: int
    height: int
    source_id: str = ""

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise SchemaError(f"image dimensions must be positive, got {self.width}x{self.height}")


@dataclass
class CandidateMask:
    """Pre-NMS leaf candidate as emitted by the segmentation adapter."""

    id: int
    mask: BinaryMask
    score: float = 1.0
    window_id: int = 0
    class_scores: Optional[Dict[str, float]] = None

    def __post_init__(self) -> None:
        if self.mask.area < 1:
            raise SchemaError(f"candidate {self.id} has an empty mask")
        if not 0.0 <= self.score <= 1.0:
            raise SchemaError(f"candidate {self.id} score {self.score} outside [0, 1]")


@dataclass
class LeafInstance:
    """Post-NMS leaf instance in global image coordinates."""

    id: int
    mask: BinaryMask
    score: float


@dataclass
class AttentionMap:
    """Aggregated stem-response grid for one leaf crop."""

    values: np.ndarray  # (size, size), non-negative
    leaf_id: int

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise SchemaError("attention map must be a square 2D grid")
        if np.any(self.values < 0):
            raise SchemaError("attention values must be non-negative")

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CropTransform:
    """Mapping between global pixels, the square D x D crop, and the
    attention grid laid over the crop."""

    bbox: Tuple[int, int, int, int]  # (x0, y0, w, h) in global pixels
    pad: Tuple[float, float]  # (left, top) in crop pixels
    scale: float  # crop pixels per global pixel
    crop_size: int
    grid_size: int

    def to_crop(self, p: Point) -> Point:
        x, y = p
        x0, y0, _, _ = self.bbox
        return ((x - x0) * self.scale + self.pad[0], (y - y0) * self.scale + self.pad[1])

    def to_grid(self, p: Point) -> Point:
        cx, cy = self.to_crop(p)
        cell = self.crop_size / self.grid_size
        return (cx / cell - 0.5, cy / cell - 0.5)

    def to_global(self, p: Point) -> Point:
        gx, gy = p
        cell = self.crop_size / self.grid_size
        cx, cy = (gx + 0.5) * cell, (gy + 0.5) * cell
        x0, y0, _, _ = self.bbox
        return ((cx - self.pad[0]) / self.scale + x0, (cy - self.pad[1]) / self.scale + y0)


@dataclass
class StemLine:
    """Fitted stem line in the attention-grid frame.

    orient == "x_of_y" means x = intercept + slope * y; "y_of_x" swaps the
    roles, which keeps near-vertical stems representable.
    """

    orient: str
    intercept: float
    slope: float
    residual: float

    def __post_init__(self) -> None:
        if self.orient not in ("x_of_y", "y_of_x"):
            raise SchemaError(f"unknown line orientation {self.orient!r}")


@dataclass
class StemSegment:
    """Clipped stem line with ordered (base, tip) endpoints in global pixels."""

    leaf_id: int
    base: Point
    tip: Point
    line: StemLine

    def __post_init__(self) -> None:
        if self.base == self.tip:
            raise SchemaError(f"stem of leaf {self.leaf_id} has coincident endpoints")


@dataclass
class PlantInstance:
    """Group of leaves forming one plant individual."""

    id: int
    leaf_ids: Set[int]
    mask: BinaryMask
    center: Point


@dataclass
class PipelineConfig:
    """Tunable parameters for the whole pipeline.

    eps, init_min_pts and mahalanobis_threshold have no published values;
    the defaults here were tuned on the synthetic oracle.
    """

    window: int = 600
    window_overlap: int = 200
    crop_size: int = 800
    nms_iou_threshold: float = 0.8
    containment_merge_threshold: float = 0.9
    attention_grid: int = 100
    eps: float = 40.0
    init_min_pts: int = 3
    max_clusters: int = 64
    mahalanobis_threshold: float = 3.0
    covariance_ridge: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.nms_iou_threshold <= 1.0:
            raise ConfigError(f"nms_iou_threshold must be in (0, 1], got {self.nms_iou_threshold}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.init_min_pts < 2:
            raise ConfigError(f"init_min_pts must be >= 2, got {self.init_min_pts}")
        if self.max_clusters < 1:
            raise ConfigError(f"max_clusters must be >= 1, got {self.max_clusters}")
        if self.covariance_ridge <= 0:
            raise ConfigError(f"covariance_ridge must be positive, got {self.covariance_ridge}")
        for name in ("window", "window_overlap", "crop_size", "attention_grid"):
            if getattr(self, name) < 0 or (name != "window_overlap" and getattr(self, name) < 1):
                raise ConfigError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def euclidean(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
