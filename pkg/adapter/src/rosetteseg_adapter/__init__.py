"""Model adapter: turns a raw image into the scene JSON + f32grid attention
files consumed by the segmentation pipeline.

The adapter is deliberately decoupled from the pipeline package — the two
communicate only through the on-disk interchange formats.
"""

__version__ = "0.1.0"

from .config import AdapterConfig
from .errors import AdapterError
from .extract import extract_scene

__all__ = ["AdapterConfig", "AdapterError", "extract_scene", "__version__"]
