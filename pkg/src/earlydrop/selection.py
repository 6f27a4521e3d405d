"""Token selection inside each region from layer-averaged CLS attention.

Tiles keep their top tokens under attention averaged over the low layer set;
the thumbnail keeps its top tokens under the high layer set.  Kept tokens are
re-emitted in original spatial order (ascending index), since downstream
consumers expect position-ordered sequences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .budgeting import BudgetAllocation
from .errors import LayerOutOfRange, QuotaExceedsN, ShapeMismatch
from .trace import ImageTrace, RegionTrace

# Layer sets are 1-based, matching the usual "layers 1..24" depth convention.
DEFAULT_LOW_LAYERS = (6, 7, 8, 9, 10)
DEFAULT_HIGH_LAYERS = (22,)


@dataclass(frozen=True)
class LayerSet:
    """Nonempty, strictly ascending set of 1-based encoder layer indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if len(self.indices) == 0:
            raise LayerOutOfRange("layer set must be nonempty")
        if any(i < 1 for i in self.indices):
            raise LayerOutOfRange(f"layer indices are 1-based: {self.indices}")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise LayerOutOfRange(f"layer indices must be strictly ascending: {self.indices}")

    @classmethod
    def of(cls, *indices: int) -> "LayerSet":
        return cls(tuple(indices))

    @classmethod
    def span(cls, first: int, last: int) -> "LayerSet":
        """Inclusive range of layers, e.g. span(6, 10) -> {6..10}."""
        return cls(tuple(range(first, last + 1)))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


@dataclass(frozen=True)
class RetentionMask:
    """Which of a region's N tokens survive, plus the scores that decided it."""

    keep: np.ndarray  # bool [N]
    kept_indices: tuple[int, ...]  # ascending
    scores: np.ndarray  # float [N] aggregated attention

    @property
    def quota(self) -> int:
        return len(self.kept_indices)

    def to_dict(self) -> dict:
        return {"kept_indices": list(self.kept_indices), "n": int(self.keep.size)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_bitmap(self) -> bytes:
        """Packed little-bit-endian bitmap: token j lives at byte j//8, bit j%8."""
        return np.packbits(self.keep, bitorder="little").tobytes()


def aggregate_attention(region: RegionTrace, layers: LayerSet) -> np.ndarray:
    """Mean CLS attention row over the given layers."""
    depth = region.num_layers
    for l in layers:
        if l > depth:
            raise LayerOutOfRange(f"layer {l} beyond encoder depth {depth}")
    rows = region.cls_attn[[l - 1 for l in layers], :].astype(np.float64)
    return rows.mean(axis=0)


def select_topk(scores, quota: int) -> RetentionMask:
    """Retain the quota highest-scoring token indices, ties to lower index."""
    arr = np.asarray(scores, dtype=np.float64)
    n = arr.size
    if not 0 <= quota <= n:
        raise QuotaExceedsN(f"quota {quota} outside [0, {n}]")
    # Stable sort on negated scores keeps the lower index first among ties.
    order = np.argsort(-arr, kind="stable")
    kept = np.sort(order[:quota])
    keep = np.zeros(n, dtype=bool)
    keep[kept] = True
    return RetentionMask(
        keep=keep,
        kept_indices=tuple(int(i) for i in kept),
        scores=arr,
    )


def select_region(region: RegionTrace, layers: LayerSet, quota: int) -> RetentionMask:
    return select_topk(aggregate_attention(region, layers), quota)


def select_all(
    trace: ImageTrace,
    alloc: BudgetAllocation,
    low_layers: LayerSet,
    high_layers: LayerSet,
) -> list[RetentionMask]:
    """Masks for every region: K tiles (low layer set) then the thumbnail (high).

    Regions are independent, so this could run concurrently; the sequential
    result is the reference either way.
    """
    if alloc.K != trace.K or alloc.N != trace.N:
        raise ShapeMismatch(
            f"allocation is for K={alloc.K}, N={alloc.N} "
            f"but trace has K={trace.K}, N={trace.N}"
        )
    masks = [
        select_region(tile, low_layers, alloc.per_tile[i])
        for i, tile in enumerate(trace.tiles)
    ]
    masks.append(select_region(trace.thumbnail, high_layers, alloc.N_global))
    return masks
