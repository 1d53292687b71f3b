from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Dict, Optional, Tuple

from .errors import AdapterError

DEFAULT_PROMPTS = ("green leaf", "soil", "stem", "petiole")


@dataclass
class AdapterConfig:
    """Settings for the model stage.

    window / window_overlap must match the pipeline configuration used for
    `segment`, otherwise window ids will not line up. `granularity` maps to
    the mask-quality threshold of the automatic mask generator (the name is
    kept verbatim; it is not a standard generator parameter).
    `cross_attention_layer` selects which of the six cross-attention layers
    supplies the stem attention maps (default: the final one).
    """

    backend: str = "heuristic"  # "heuristic" or "foundation"
    segmenter_checkpoint: Optional[str] = None
    classifier_checkpoint: Optional[str] = None
    detector_checkpoint: Optional[str] = None
    window: int = 600
    window_overlap: int = 200
    crop_size: int = 800
    points_per_side: int = 32
    granularity: float = 0.8
    prompts: Tuple[str, str, str, str] = DEFAULT_PROMPTS
    cross_attention_layer: int = 5
    device: str = "cpu"
    min_candidate_area: int = 40
    exg_threshold: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.backend not in ("heuristic", "foundation"):
            raise AdapterError(f"unknown backend {self.backend!r}")
        if self.window < 1 or not 0 <= self.window_overlap < self.window:
            raise AdapterError("need 0 <= window_overlap < window")
        if self.crop_size < 64:
            raise AdapterError("crop_size too small for the attention pyramid")
        if not 0.0 <= self.granularity <= 1.0:
            raise AdapterError("granularity must lie in [0, 1]")
        if not 0 <= self.cross_attention_layer < 6:
            raise AdapterError("cross_attention_layer must be one of the six layers (0..5)")
        self.prompts = tuple(self.prompts)
        if len(self.prompts) != 4:
            raise AdapterError("prompts must be (leaf, soil, stem, petiole)")

    @property
    def leaf_prompt(self) -> str:
        return self.prompts[0]

    @property
    def soil_prompt(self) -> str:
        return self.prompts[1]

    @property
    def level_sizes(self) -> Tuple[int, ...]:
        return tuple(self.crop_size // d for d in (8, 16, 32, 64))

    def to_dict(self) -> Dict:
        d = asdict(self)
        d["prompts"] = list(self.prompts)
        return d

    @classmethod
    def from_dict(cls, data: Dict) -> "AdapterConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise AdapterError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)
