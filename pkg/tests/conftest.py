"""Shared fixtures and the acceptance-suite result banner."""

from __future__ import annotations

import numpy as np
import pytest

from earlydrop import make_trace
from earlydrop.trace import RegionTrace


def build_region(cls_attn, cls_embed=None, clip_embed=None) -> RegionTrace:
    attn = np.asarray(cls_attn, dtype=np.float32)
    if cls_embed is None:
        cls_embed = np.ones(4, dtype=np.float32)
    return RegionTrace(
        cls_attn=attn,
        cls_embed=np.asarray(cls_embed, dtype=np.float32),
        clip_embed=None if clip_embed is None else np.asarray(clip_embed, np.float32),
    )


def build_trace(
    tiles,
    thumbnail,
    grid_rows=1,
    grid_cols=None,
    text_embed=None,
    image_id="test",
):
    if grid_cols is None:
        grid_cols = len(tiles) // grid_rows
    return make_trace(
        image_id=image_id,
        grid_rows=grid_rows,
        grid_cols=grid_cols,
        tiles=tiles,
        thumbnail=thumbnail,
        text_embed=text_embed,
    )


def random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    v = v / np.linalg.norm(v)
    # Renormalize after the f32 downcast so stored norms stay within 1e-3.
    v32 = v.astype(np.float32)
    return (v32 / np.linalg.norm(v32.astype(np.float64))).astype(np.float32)


def random_trace(
    rng: np.random.Generator,
    grid_rows=None,
    grid_cols=None,
    N=None,
    num_layers=None,
    with_clip=None,
    with_text=None,
    d_embed=6,
    d_clip=5,
):
    """Unstructured random trace, independent of the synth generator."""
    if grid_rows is None:
        grid_rows = int(rng.integers(1, 3))
    if grid_cols is None:
        grid_cols = int(rng.integers(1, 3))
    if N is None:
        N = int(rng.integers(1, 13))
    if num_layers is None:
        num_layers = int(rng.integers(1, 5))
    if with_clip is None:
        with_clip = bool(rng.integers(0, 2))
    if with_text is None:
        with_text = bool(rng.integers(0, 2))
    k = grid_rows * grid_cols

    def region(clip: bool) -> RegionTrace:
        rows = rng.uniform(0.0, 1.0, size=(num_layers, N))
        sums = rows.sum(axis=1, keepdims=True)
        targets = rng.uniform(0.05, 0.999, size=(num_layers, 1))
        rows = rows / np.maximum(sums, 1e-12) * targets
        return RegionTrace(
            cls_attn=rows.astype(np.float32),
            cls_embed=rng.normal(size=d_embed).astype(np.float32),
            clip_embed=random_unit(rng, d_clip) if clip else None,
        )

    return make_trace(
        image_id=f"rnd-{rng.integers(0, 1 << 31)}",
        grid_rows=grid_rows,
        grid_cols=grid_cols,
        tiles=[region(with_clip) for _ in range(k)],
        thumbnail=region(False),
        text_embed=random_unit(rng, d_clip) if with_text else None,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0xED)


# One pass/fail line per acceptance criterion at the end of the run.

def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", ""):
                continue
            if rep.when != "call" and outcome == "passed":
                continue
            name = rep.nodeid.split("::")[-1]
            tag = "PASS" if outcome == "passed" else "FAIL"
            lines.append((name, tag))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, tag in sorted(set(lines)):
            terminalreporter.write_line(f"[{tag}] {name}")
