"""Theoretical prefill cost model: FLOPs and KV-cache footprint.

Per decoder layer, a T-token prefill costs 8*T*d^2 (QKV + output projections)
+ 4*T^2*d (attention score and value matmuls) + 6*T*d*m (MLP).  The KV cache
holds 2 tensors of T*d elements per layer.  Cache sizes are MiB (2^20 bytes):
with the 7B profile one token costs exactly 0.5 MiB, so counts map to round
figures.  Decode-phase cost and wall-clock speed are hardware-bound and out
of scope here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .budgeting import BudgetAllocation


@dataclass(frozen=True)
class LlmProfile:
    """Decoder shape parameters that drive the cost model."""

    name: str
    d: int  # hidden dimension
    m: int  # MLP intermediate dimension
    num_layers: int
    kv_bytes_per_element: int = 2  # half precision

    def __post_init__(self):
        if min(self.d, self.m, self.num_layers, self.kv_bytes_per_element) < 1:
            raise ValueError("profile dimensions must be positive")

    @classmethod
    def from_json_file(cls, path) -> "LlmProfile":
        d = json.loads(Path(path).read_text())
        return cls(
            name=d.get("name", Path(path).stem),
            d=int(d["d"]),
            m=int(d["m"]),
            num_layers=int(d["num_layers"]),
            kv_bytes_per_element=int(d.get("kv_bytes_per_element", 2)),
        )


BUILTIN_PROFILES = {
    "vicuna-7b": LlmProfile(name="vicuna-7b", d=4096, m=11008, num_layers=32),
    "vicuna-13b": LlmProfile(name="vicuna-13b", d=5120, m=13824, num_layers=40),
}


def resolve_profile(name_or_path: str) -> LlmProfile:
    """Look up a built-in profile by name, or load one from a JSON file."""
    if name_or_path in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name_or_path]
    path = Path(name_or_path)
    if path.exists():
        return LlmProfile.from_json_file(path)
    raise KeyError(
        f"unknown profile {name_or_path!r}; built-ins: {sorted(BUILTIN_PROFILES)}"
    )


@dataclass(frozen=True)
class EfficiencyReport:
    """Prefill cost for one (visual, text) token split under one profile."""

    n_visual: int
    n_text: int
    tflops: float
    kv_cache_mib: float
    per_layer_flops: float
    profile: str

    def to_dict(self) -> dict:
        return {
            "n_visual": self.n_visual,
            "n_text": self.n_text,
            "tflops": self.tflops,
            "kv_cache_mib": self.kv_cache_mib,
            "profile": self.profile,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def prefill_flops(n_visual: int, n_text: int, profile: LlmProfile) -> EfficiencyReport:
    """Cost of prefilling n_visual + n_text tokens through the whole decoder."""
    if n_visual < 0 or n_text < 0:
        raise ValueError("token counts must be nonnegative")
    t = n_visual + n_text
    d, m = profile.d, profile.m
    per_layer = 8 * t * d * d + 4 * t * t * d + 6 * t * d * m
    kv_bytes = 2 * profile.num_layers * t * d * profile.kv_bytes_per_element
    return EfficiencyReport(
        n_visual=n_visual,
        n_text=n_text,
        tflops=profile.num_layers * per_layer / 1e12,
        kv_cache_mib=kv_bytes / 2**20,
        per_layer_flops=float(per_layer),
        profile=profile.name,
    )


def pruned_flops(
    alloc: BudgetAllocation, n_text: int, profile: LlmProfile
) -> EfficiencyReport:
    """Prefill cost after pruning: the exact integer quota stands in for R*N_v."""
    return prefill_flops(alloc.N_total, n_text, profile)
