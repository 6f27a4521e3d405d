"""Budget-constrained visual token pruning over exported encoder traces.

The pipeline: read an ImageTrace, score tiles (visual saliency + textual
relevance), allocate the token budget, select tokens per region from
layer-averaged CLS attention, and report the theoretical cost savings.
"""

from .budgeting import BudgetAllocation, allocate, effective_ratio
from .efficiency import (
    BUILTIN_PROFILES,
    EfficiencyReport,
    LlmProfile,
    prefill_flops,
    pruned_flops,
    resolve_profile,
)
from .errors import EarlydropError
from .scoring import TileScores, combine, score_tiles, textual_relevance, visual_saliency
from .selection import (
    DEFAULT_HIGH_LAYERS,
    DEFAULT_LOW_LAYERS,
    LayerSet,
    RetentionMask,
    aggregate_attention,
    select_all,
    select_topk,
)
from .synth import SynthSpec, generate, oracle_topk
from .tiling import TilingPlan, map_patch_to_image, plan_tiling
from .trace import (
    ImageTrace,
    RegionTrace,
    cosine_similarity,
    make_trace,
    read_trace,
    softmax,
    validate_trace,
    write_trace,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_PROFILES",
    "BudgetAllocation",
    "DEFAULT_HIGH_LAYERS",
    "DEFAULT_LOW_LAYERS",
    "EarlydropError",
    "EfficiencyReport",
    "ImageTrace",
    "LayerSet",
    "LlmProfile",
    "RegionTrace",
    "RetentionMask",
    "SynthSpec",
    "TileScores",
    "TilingPlan",
    "aggregate_attention",
    "allocate",
    "combine",
    "cosine_similarity",
    "effective_ratio",
    "generate",
    "make_trace",
    "map_patch_to_image",
    "oracle_topk",
    "plan_tiling",
    "prefill_flops",
    "pruned_flops",
    "read_trace",
    "resolve_profile",
    "score_tiles",
    "select_all",
    "select_topk",
    "softmax",
    "textual_relevance",
    "validate_trace",
    "visual_saliency",
    "write_trace",
]
