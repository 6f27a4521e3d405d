"""Per-tile importance from visual saliency and textual relevance.

Visual saliency softmaxes each tile's CLS-embedding cosine against the
thumbnail; textual relevance softmaxes each tile's joint-space cosine against
the instruction embedding.  The final score is a convex mix of the two.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import AlphaOutOfRange, MissingClipEmbedding, MissingTextEmbedding
from .trace import ImageTrace, cosine_similarity, softmax

DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class TileScores:
    """Raw similarities and normalized per-tile scores, all length K."""

    cls_sim: tuple[float, ...]
    clip_score: tuple[float, ...] | None
    s_v: tuple[float, ...]
    s_t: tuple[float, ...] | None
    s: tuple[float, ...]
    alpha: float
    # True when a missing text path forced pure visual saliency (alpha -> 1).
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "cls_sim": list(self.cls_sim),
            "clip_score": None if self.clip_score is None else list(self.clip_score),
            "s_v": list(self.s_v),
            "s_t": None if self.s_t is None else list(self.s_t),
            "s": list(self.s),
            "alpha": self.alpha,
            "fallback": self.fallback,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def visual_saliency(trace: ImageTrace) -> np.ndarray:
    """Softmax over tiles of cosine(tile CLS embedding, thumbnail CLS embedding)."""
    sims = raw_cls_similarities(trace)
    return softmax(sims)


def raw_cls_similarities(trace: ImageTrace) -> np.ndarray:
    thumb = trace.thumbnail.cls_embed
    return np.array(
        [cosine_similarity(t.cls_embed, thumb) for t in trace.tiles], dtype=np.float64
    )


def textual_relevance(trace: ImageTrace) -> np.ndarray:
    """Softmax over tiles of cosine(tile joint embedding, instruction embedding)."""
    sims = raw_clip_scores(trace)
    return softmax(sims)


def raw_clip_scores(trace: ImageTrace) -> np.ndarray:
    if trace.text_embed is None:
        raise MissingTextEmbedding("trace carries no instruction embedding")
    for i, tile in enumerate(trace.tiles):
        if tile.clip_embed is None:
            raise MissingClipEmbedding(f"tile {i} has no joint-space embedding")
    return np.array(
        [cosine_similarity(t.clip_embed, trace.text_embed) for t in trace.tiles],
        dtype=np.float64,
    )


def combine(s_v, s_t, alpha: float) -> np.ndarray:
    """alpha * s_v + (1 - alpha) * s_t; with s_t absent, alpha acts as 1."""
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha {alpha} outside [0, 1]")
    v = np.asarray(s_v, dtype=np.float64)
    if s_t is None:
        return v.copy()
    t = np.asarray(s_t, dtype=np.float64)
    if v.shape != t.shape:
        raise ValueError(f"score lengths differ: {v.shape} vs {t.shape}")
    return alpha * v + (1.0 - alpha) * t


def score_tiles(trace: ImageTrace, alpha: float = DEFAULT_ALPHA) -> TileScores:
    """Full tile-scoring pass with the documented no-text fallback.

    When the trace lacks the text path (no instruction embedding, or tiles
    without joint-space embeddings) and alpha < 1, scoring falls back to pure
    visual saliency and flags it, rather than failing the pipeline.
    """
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha {alpha} outside [0, 1]")
    cls_sim = raw_cls_similarities(trace)
    s_v = softmax(cls_sim)

    has_text = trace.text_embed is not None and all(
        t.clip_embed is not None for t in trace.tiles
    )
    if has_text:
        clip_score = raw_clip_scores(trace)
        s_t = softmax(clip_score)
        s = combine(s_v, s_t, alpha)
        return TileScores(
            cls_sim=tuple(cls_sim.tolist()),
            clip_score=tuple(clip_score.tolist()),
            s_v=tuple(s_v.tolist()),
            s_t=tuple(s_t.tolist()),
            s=tuple(s.tolist()),
            alpha=alpha,
        )
    return TileScores(
        cls_sim=tuple(cls_sim.tolist()),
        clip_score=None,
        s_v=tuple(s_v.tolist()),
        s_t=None,
        s=tuple(s_v.tolist()),
        alpha=1.0,
        fallback=alpha < 1.0,
    )
