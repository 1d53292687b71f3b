"""Foundation-model backend stubs.

The real backend runs an automatic mask generator per window, scores each
mask against the leaf/soil prompts with an open-vocabulary classifier, and
reads the selected cross-attention layer of a grounded detector for the
stem/petiole prompts. The model calls are isolated here behind lazy imports
so the rest of the adapter works without GPU weights installed.
"""
from __future__ import annotations

from .config import AdapterConfig
from .errors import ModelUnavailableError


def load_models(cfg: AdapterConfig):
    try:
        import torch  # noqa: F401
    except ImportError as exc:
        raise ModelUnavailableError(
            "the foundation backend requires torch and local checkpoints; "
            "install the 'models' extra and set the checkpoint paths, or use "
            "backend='heuristic'"
        ) from exc
    missing = [name for name, path in (
        ("segmenter_checkpoint", cfg.segmenter_checkpoint),
        ("classifier_checkpoint", cfg.classifier_checkpoint),
        ("detector_checkpoint", cfg.detector_checkpoint),
    ) if not path]
    if missing:
        raise ModelUnavailableError(f"missing checkpoint paths: {missing}")
    raise ModelUnavailableError(
        "no foundation-model runtime is bundled with this package; plug the "
        "model calls in here (mask generation, prompt scoring, cross-attention "
        f"layer {cfg.cross_attention_layer} extraction)"
    )
