"""Token budget allocation: retention ratio -> global and per-tile quotas.

The total budget is floor((K+1) * N * R).  A fixed floor(N * R) quota is
reserved for the thumbnail first; the rest is split across tiles
proportionally to their scores, floored.  Floors strand up to K-1 tokens,
which would silently undershoot the requested budget, so by default the
remainder is handed out one token at a time by largest fractional part
(ties to the lower index); strict_floor disables that redistribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import RatioOutOfRange, ScoresNotNormalized

SCORE_SUM_TOL = 1e-4


@dataclass(frozen=True)
class BudgetAllocation:
    """Resolved token quotas for one image."""

    R: float
    N: int
    K: int
    N_total: int
    N_global: int
    N_local: int
    per_tile: tuple[int, ...]
    strict_floor: bool = False

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "N": self.N,
            "K": self.K,
            "N_total": self.N_total,
            "N_global": self.N_global,
            "N_local": self.N_local,
            "per_tile": list(self.per_tile),
            "strict_floor": self.strict_floor,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def allocate(
    K: int,
    N: int,
    R: float,
    s,
    strict_floor: bool = False,
) -> BudgetAllocation:
    """Distribute the token budget for K tiles plus the thumbnail.

    s must be a length-K score vector on the simplex.  Every quota lands in
    [0, N]; unless strict_floor is set, N_global + sum(per_tile) == N_total.
    """
    if K < 1 or N < 1:
        raise ValueError("K and N must be positive")
    if not 0.0 < R <= 1.0:
        raise RatioOutOfRange(f"retention ratio {R} outside (0, 1]")
    scores = [float(x) for x in s]
    if len(scores) != K:
        raise ScoresNotNormalized(f"expected {K} scores, got {len(scores)}")
    total = sum(scores)
    if abs(total - 1.0) > SCORE_SUM_TOL:
        raise ScoresNotNormalized(f"scores sum to {total}, expected 1")

    n_total = math.floor((K + 1) * N * R)
    n_global = math.floor(N * R)
    n_local = n_total - n_global

    raw = [n_local * x for x in scores]
    base = [min(math.floor(x), N) for x in raw]
    if not strict_floor:
        fracs = [x - math.floor(x) for x in raw]
        # Largest fractional part first, lower index on ties; cycle until the
        # leftover pool (floor remainders plus any clipping overflow) is gone.
        order = sorted(range(K), key=lambda i: (-fracs[i], i))
        pool = n_local - sum(base)
        while pool > 0:
            placed = False
            for i in order:
                if pool == 0:
                    break
                if base[i] < N:
                    base[i] += 1
                    pool -= 1
                    placed = True
            if not placed:  # pragma: no cover - pool never exceeds capacity
                raise AssertionError("budget exceeds total tile capacity")

    return BudgetAllocation(
        R=R,
        N=N,
        K=K,
        N_total=n_total,
        N_global=n_global,
        N_local=n_local,
        per_tile=tuple(base),
        strict_floor=strict_floor,
    )


def effective_ratio(alloc: BudgetAllocation) -> float:
    """Fraction of the full (K+1)*N token stream the allocation retains."""
    return alloc.N_total / ((alloc.K + 1) * alloc.N)
