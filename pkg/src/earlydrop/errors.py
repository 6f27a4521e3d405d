"""Exception hierarchy shared by all earlydrop modules.

Every error raised by the library derives from EarlydropError, so callers
(notably the CLI) can distinguish input/validation failures from genuine
bugs with a single except clause.
"""

from __future__ import annotations


class EarlydropError(Exception):
    """Base class for all earlydrop errors."""


# -- trace container ---------------------------------------------------------

class TraceError(EarlydropError):
    """Base class for trace container load/store failures."""


class BadMagic(TraceError):
    """Input does not start with the trace container magic bytes."""


class CorruptHeader(TraceError):
    """Container header is unparseable, incomplete, or self-inconsistent."""


class ShapeMismatch(TraceError):
    """A tensor's declared or actual shape contradicts the trace metadata."""


class NonFiniteValue(TraceError):
    """A tensor payload contains NaN or Inf."""


class InvariantViolation(TraceError):
    """A value-domain invariant failed (attention range, embedding norm, ...)."""


# -- numeric primitives ------------------------------------------------------

class ZeroNorm(EarlydropError):
    """Cosine similarity requested for a zero-length vector."""


class EmptyInput(EarlydropError):
    """Softmax over an empty score sequence."""


# -- tiling ------------------------------------------------------------------

class IndexOutOfRange(EarlydropError):
    """Tile or patch index outside the plan's grid."""


# -- scoring -----------------------------------------------------------------

class MissingTextEmbedding(EarlydropError):
    """Textual relevance requested but the trace carries no text embedding."""


class MissingClipEmbedding(EarlydropError):
    """Textual relevance requested but a tile lacks its joint-space embedding."""


class AlphaOutOfRange(EarlydropError):
    """Score-mixing weight outside [0, 1]."""


# -- budgeting ---------------------------------------------------------------

class RatioOutOfRange(EarlydropError):
    """Retention ratio outside (0, 1]."""


class ScoresNotNormalized(EarlydropError):
    """Tile scores do not sum to 1 within tolerance."""


# -- selection ---------------------------------------------------------------

class LayerOutOfRange(EarlydropError):
    """A layer index falls outside the region's encoder depth."""


class QuotaExceedsN(EarlydropError):
    """Requested retention quota is negative or larger than the region."""


# -- analysis ----------------------------------------------------------------

class EmptyCorpus(EarlydropError):
    """Corpus-level statistic requested over zero traces."""


class DimensionMismatch(EarlydropError):
    """Saliency mask dimensions disagree with the image geometry."""


# -- synth -------------------------------------------------------------------

class InvalidSpec(EarlydropError):
    """Synthetic trace spec violates its own constraints."""


class TooLarge(EarlydropError):
    """Exhaustive oracle invoked beyond its enumerable size limit."""
