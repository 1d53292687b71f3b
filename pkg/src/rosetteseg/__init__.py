"""Hierarchical leaf/plant instance segmentation for top-view rosette crops."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DegenerateAttentionError,
    InternalConsistencyError,
    MaskAlgebraError,
    RosetteSegError,
    SchemaError,
    SpecInfeasibleError,
    StemMissError,
)
from .masks import BinaryMask, mask_containment, mask_iou, rle_decode, rle_encode  # noqa: F401
from .model import (  # noqa: F401
    AttentionMap,
    CandidateMask,
    CropTransform,
    ImageMeta,
    LeafInstance,
    PipelineConfig,
    PlantInstance,
    StemLine,
    StemSegment,
)
from .sceneio import load_result, load_scene, save_instances  # noqa: F401
