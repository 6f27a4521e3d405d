"""Deterministic synthetic traces and brute-force oracles for testing.

Generated traces plant a two-stage attention structure: layers up to the
stage boundary concentrate 90% of their patch mass on one index set, later
layers on another.  Tile selection over early layers must recover the first
set; thumbnail selection over late layers the second.  Randomness comes from
a splitmix64 counter generator, so identical specs yield byte-identical
containers on every platform.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, TooLarge
from .trace import ImageTrace, RegionTrace, make_trace

# Fraction of a row's mass landing on the planted set, and the row total.
PLANTED_MASS = 0.9
ROW_MASS = 0.98

ORACLE_MAX_N = 16


class SplitMix64:
    """splitmix64: stateless 64-bit mix of an incrementing counter.

    Exact integer arithmetic plus a single IEEE-754 divide per draw, so the
    stream is identical on every platform and language.
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self._counter = seed & self._MASK

    def next_u64(self) -> int:
        self._counter = (self._counter + 0x9E3779B97F4A7C15) & self._MASK
        z = self._counter
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def gaussian(self) -> float:
        # Box-Muller; log/cos have platform-stable libm behavior in practice,
        # and the final f32 downcast absorbs any last-ulp drift.
        u1 = self.uniform()
        u2 = self.uniform()
        while u1 == 0.0:
            u1 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic trace family."""

    seed: int
    K: int = 4
    N: int = 16
    num_layers: int = 24
    stage_boundary: int = 12
    planted_primary: tuple[int, ...] = (0, 1)
    planted_shortcut: tuple[int, ...] = (5, 6)
    noise_scale: float = 0.0
    d_embed: int = 32
    d_clip: int = 32
    image_id: str | None = None

    def validate(self) -> None:
        if self.K < 1 or self.N < 1 or self.num_layers < 2:
            raise InvalidSpec("need K >= 1, N >= 1, num_layers >= 2")
        if not 1 <= self.stage_boundary <= self.num_layers - 1:
            raise InvalidSpec(
                f"stage boundary {self.stage_boundary} outside "
                f"[1, {self.num_layers - 1}]"
            )
        for name, planted in (
            ("planted_primary", self.planted_primary),
            ("planted_shortcut", self.planted_shortcut),
        ):
            if len(planted) == 0:
                raise InvalidSpec(f"{name} must be nonempty")
            if len(set(planted)) != len(planted):
                raise InvalidSpec(f"{name} has duplicate indices")
            if any(not 0 <= p < self.N for p in planted):
                raise InvalidSpec(f"{name} index outside [0, {self.N})")
            if len(planted) >= self.N:
                raise InvalidSpec(f"{name} must leave at least one free patch")
        if self.noise_scale < 0:
            raise InvalidSpec("noise_scale must be nonnegative")
        if self.d_embed < 1 or self.d_clip < 1:
            raise InvalidSpec("embedding dims must be positive")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "K": self.K,
            "N": self.N,
            "num_layers": self.num_layers,
            "stage_boundary": self.stage_boundary,
            "planted_primary": list(self.planted_primary),
            "planted_shortcut": list(self.planted_shortcut),
            "noise_scale": self.noise_scale,
            "d_embed": self.d_embed,
            "d_clip": self.d_clip,
            "image_id": self.image_id,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(
            seed=int(d["seed"]),
            K=int(d.get("K", 4)),
            N=int(d.get("N", 16)),
            num_layers=int(d.get("num_layers", 24)),
            stage_boundary=int(d.get("stage_boundary", 12)),
            planted_primary=tuple(int(p) for p in d.get("planted_primary", (0, 1))),
            planted_shortcut=tuple(int(p) for p in d.get("planted_shortcut", (5, 6))),
            noise_scale=float(d.get("noise_scale", 0.0)),
            d_embed=int(d.get("d_embed", 32)),
            d_clip=int(d.get("d_clip", 32)),
            image_id=d.get("image_id"),
        )

    @classmethod
    def from_json_file(cls, path) -> "SynthSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _group_weights(rng: SplitMix64, indices, noise_scale: float, mass: float, n: int):
    """Distribute `mass` over `indices`, jittered but never leaving the group."""
    out = np.zeros(n, dtype=np.float64)
    raw = [1.0 + noise_scale * rng.uniform() for _ in indices]
    total = math.fsum(raw)
    for idx, w in zip(indices, raw):
        out[idx] = w / total * mass
    return out


def _attention_row(spec: SynthSpec, rng: SplitMix64, layer: int) -> np.ndarray:
    planted = (
        spec.planted_primary
        if layer <= spec.stage_boundary
        else spec.planted_shortcut
    )
    rest = tuple(i for i in range(spec.N) if i not in set(planted))
    row = _group_weights(rng, planted, spec.noise_scale, ROW_MASS * PLANTED_MASS, spec.N)
    row += _group_weights(rng, rest, spec.noise_scale, ROW_MASS * (1 - PLANTED_MASS), spec.N)
    return row


def _unit_vector(rng: SplitMix64, dim: int) -> np.ndarray:
    # fsum gives an exactly rounded norm, keeping the byte stream identical
    # across platforms and BLAS builds.
    v = [rng.gaussian() for _ in range(dim)]
    norm = math.sqrt(math.fsum(x * x for x in v))
    while norm == 0.0:  # pragma: no cover - vanishing probability
        v = [rng.gaussian() for _ in range(dim)]
        norm = math.sqrt(math.fsum(x * x for x in v))
    return np.array([x / norm for x in v], dtype=np.float32)


def _region(spec: SynthSpec, rng: SplitMix64, with_clip: bool) -> RegionTrace:
    attn = np.stack(
        [_attention_row(spec, rng, layer) for layer in range(1, spec.num_layers + 1)]
    )
    return RegionTrace(
        cls_attn=attn.astype(np.float32),
        cls_embed=_unit_vector(rng, spec.d_embed),
        clip_embed=_unit_vector(rng, spec.d_clip) if with_clip else None,
    )


def generate(spec: SynthSpec) -> ImageTrace:
    """Deterministically build one planted-structure trace."""
    spec.validate()
    rng = SplitMix64(spec.seed)
    grid_cols, grid_rows = _grid_shape(spec.K)
    tiles = [_region(spec, rng, with_clip=True) for _ in range(spec.K)]
    thumbnail = _region(spec, rng, with_clip=False)
    text_embed = _unit_vector(rng, spec.d_clip)
    return make_trace(
        image_id=spec.image_id or f"synth-{spec.seed}",
        grid_rows=grid_rows,
        grid_cols=grid_cols,
        tiles=tiles,
        thumbnail=thumbnail,
        text_embed=text_embed,
    )


def _grid_shape(k: int) -> tuple[int, int]:
    """Most-square (cols, rows) factorization with cols >= rows."""
    rows = int(math.isqrt(k))
    while k % rows != 0:
        rows -= 1
    return k // rows, rows


def oracle_topk(scores, quota: int) -> tuple[int, ...]:
    """Exhaustive reference for top-k: best-sum subset, lexicographically least.

    Enumerates every quota-subset, so inputs are capped at 16 entries.
    """
    vals = [float(x) for x in scores]
    n = len(vals)
    if n > ORACLE_MAX_N:
        raise TooLarge(f"oracle limited to {ORACLE_MAX_N} entries, got {n}")
    if not 0 <= quota <= n:
        raise ValueError(f"quota {quota} outside [0, {n}]")
    best: tuple[int, ...] | None = None
    best_sum = -math.inf
    # combinations() yields lexicographically, so strict > keeps the least.
    for subset in itertools.combinations(range(n), quota):
        total = sum(vals[i] for i in subset)
        if total > best_sum:
            best_sum = total
            best = subset
    assert best is not None
    return best
