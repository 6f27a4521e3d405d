"""Encoder trace exporter for the earlydrop pruning toolkit."""

from .encoder import EncoderBundle, hash_token_ids, load_encoder
from .errors import ExportError, ModelLoadError, PreprocessMismatch
from .export import ExportJob, export_trace, validate_against_planner
from .preprocess import prepare_regions, to_pixel_tensor

__version__ = "0.1.0"

__all__ = [
    "EncoderBundle",
    "ExportError",
    "ExportJob",
    "ModelLoadError",
    "PreprocessMismatch",
    "export_trace",
    "hash_token_ids",
    "load_encoder",
    "prepare_regions",
    "to_pixel_tensor",
    "validate_against_planner",
]
