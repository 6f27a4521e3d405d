"""Tile scoring: visual saliency, textual relevance, and the convex mix."""

from __future__ import annotations

import math

import numpy as np
import pytest

from earlydrop import combine, score_tiles, textual_relevance, visual_saliency
from earlydrop.errors import (
    AlphaOutOfRange,
    MissingClipEmbedding,
    MissingTextEmbedding,
)
from earlydrop.trace import RegionTrace, make_trace

from conftest import build_region, build_trace, random_unit


def trace_with_embeds(cls_embeds, thumb_embed, clip_embeds=None, text_embed=None):
    attn = np.full((2, 4), 0.1, dtype=np.float32)
    tiles = []
    for i, emb in enumerate(cls_embeds):
        clip = None if clip_embeds is None else clip_embeds[i]
        tiles.append(build_region(attn, cls_embed=emb, clip_embed=clip))
    return build_trace(
        tiles,
        build_region(attn, cls_embed=thumb_embed),
        grid_cols=len(tiles),
        text_embed=text_embed,
    )


def two_step_oracle(embeds, reference):
    # Independent recomputation: plain-math cosines, then plain-math softmax.
    sims = []
    for e in embeds:
        num = sum(a * b for a, b in zip(e, reference))
        den = math.sqrt(sum(a * a for a in e)) * math.sqrt(
            sum(b * b for b in reference)
        )
        sims.append(num / den)
    mx = max(sims)
    exps = [math.exp(s - mx) for s in sims]
    total = sum(exps)
    return [x / total for x in exps]


class TestVisualSaliency:
    def test_identical_embeddings_uniform(self):
        e = [1.0, 2.0, 0.5]
        t = trace_with_embeds([e, e, e, e], e)
        assert visual_saliency(t) == pytest.approx([0.25] * 4)

    def test_two_tile_closed_form(self):
        # Similarities (1, 0) softmax to (e/(e+1), 1/(e+1)).
        t = trace_with_embeds([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0])
        sv = visual_saliency(t)
        assert sv == pytest.approx([0.7311, 0.2689], abs=1e-4)

    def test_matches_two_step_oracle(self, rng):
        for _ in range(20):
            k = int(rng.integers(2, 6))
            embeds = [rng.normal(size=6).tolist() for _ in range(k)]
            thumb = rng.normal(size=6).tolist()
            t = trace_with_embeds(embeds, thumb)
            expected = two_step_oracle(
                [tile.cls_embed.tolist() for tile in t.tiles],
                t.thumbnail.cls_embed.tolist(),
            )
            assert visual_saliency(t) == pytest.approx(expected, abs=1e-9)

    def test_monotone_in_similarity(self):
        base = [1.0, 0.0, 0.0]
        t1 = trace_with_embeds([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0]], base)
        t2 = trace_with_embeds([[1.0, 0.2, 0.0], [0.0, 1.0, 0.0]], base)
        # Tile 0 more aligned with the thumbnail in t2, so its share grows.
        assert visual_saliency(t2)[0] > visual_saliency(t1)[0]


class TestTextualRelevance:
    def test_equal_clip_embeds_uniform(self):
        e = [1.0, 0.0]
        t = trace_with_embeds(
            [e, e, e],
            e,
            clip_embeds=[[1.0, 0.0]] * 3,
            text_embed=[0.0, 1.0],
        )
        assert textual_relevance(t) == pytest.approx([1 / 3] * 3)

    def test_two_tile_closed_form(self):
        t = trace_with_embeds(
            [[1.0, 0.0], [1.0, 0.0]],
            [1.0, 0.0],
            clip_embeds=[[1.0, 0.0], [0.0, 1.0]],
            text_embed=[1.0, 0.0],
        )
        st = textual_relevance(t)
        assert st == pytest.approx([0.7311, 0.2689], abs=1e-4)

    def test_matches_two_step_oracle(self, rng):
        k = 5
        clips = [random_unit(rng, 8) for _ in range(k)]
        text = random_unit(rng, 8)
        t = trace_with_embeds(
            [[1.0, 0.0]] * k,
            [1.0, 0.0],
            clip_embeds=clips,
            text_embed=text,
        )
        expected = two_step_oracle(
            [tile.clip_embed.tolist() for tile in t.tiles],
            t.text_embed.tolist(),
        )
        assert textual_relevance(t) == pytest.approx(expected, abs=1e-6)

    def test_missing_text_embed(self):
        t = trace_with_embeds(
            [[1.0, 0.0]], [1.0, 0.0], clip_embeds=[[1.0, 0.0]]
        )
        with pytest.raises(MissingTextEmbedding):
            textual_relevance(t)

    def test_missing_clip_embed(self):
        t = trace_with_embeds([[1.0, 0.0]], [1.0, 0.0], text_embed=[1.0, 0.0])
        with pytest.raises(MissingClipEmbedding):
            textual_relevance(t)


class TestCombine:
    def test_alpha_one_returns_visual(self):
        assert combine([0.4, 0.6], [0.9, 0.1], 1.0) == pytest.approx([0.4, 0.6])

    def test_alpha_zero_returns_textual(self):
        assert combine([0.4, 0.6], [0.9, 0.1], 0.0) == pytest.approx([0.9, 0.1])

    def test_half_mix(self):
        assert combine([0.4, 0.6], [0.7, 0.3], 0.5) == pytest.approx([0.55, 0.45])

    def test_absent_textual_acts_as_alpha_one(self):
        assert combine([0.4, 0.6], None, 0.25) == pytest.approx([0.4, 0.6])

    def test_alpha_out_of_range(self):
        with pytest.raises(AlphaOutOfRange):
            combine([1.0], [1.0], 1.5)
        with pytest.raises(AlphaOutOfRange):
            combine([1.0], [1.0], -0.1)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_simplex_preserved(self, rng, alpha):
        for _ in range(25):
            k = int(rng.integers(1, 10))
            sv = rng.dirichlet(np.ones(k))
            st_ = rng.dirichlet(np.ones(k))
            out = combine(sv, st_, alpha)
            assert out.sum() == pytest.approx(1.0, abs=1e-6)
            assert np.all((out >= 0) & (out <= 1))


class TestScoreTiles:
    def test_full_path_mixes_both_signals(self, rng):
        k = 3
        t = trace_with_embeds(
            [rng.normal(size=4).tolist() for _ in range(k)],
            rng.normal(size=4).tolist(),
            clip_embeds=[random_unit(rng, 6) for _ in range(k)],
            text_embed=random_unit(rng, 6),
        )
        scores = score_tiles(t, alpha=0.5)
        assert scores.fallback is False
        assert scores.alpha == 0.5
        expected = 0.5 * np.array(scores.s_v) + 0.5 * np.array(scores.s_t)
        assert scores.s == pytest.approx(expected.tolist())
        assert sum(scores.s) == pytest.approx(1.0, abs=1e-6)

    def test_fallback_without_text(self):
        t = trace_with_embeds([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0])
        scores = score_tiles(t, alpha=0.5)
        assert scores.fallback is True
        assert scores.alpha == 1.0
        assert scores.s == scores.s_v
        assert scores.s_t is None

    def test_permutation_equivariance(self, rng):
        k = 4
        embeds = [rng.normal(size=5).tolist() for _ in range(k)]
        clips = [random_unit(rng, 6) for _ in range(k)]
        thumb = rng.normal(size=5).tolist()
        text = random_unit(rng, 6)
        t = trace_with_embeds(embeds, thumb, clip_embeds=clips, text_embed=text)
        perm = [2, 0, 3, 1]
        tp = trace_with_embeds(
            [embeds[i] for i in perm],
            thumb,
            clip_embeds=[clips[i] for i in perm],
            text_embed=text,
        )
        a = score_tiles(t, 0.5)
        b = score_tiles(tp, 0.5)
        for field in ("s_v", "s_t", "s"):
            orig = getattr(a, field)
            permuted = getattr(b, field)
            assert permuted == pytest.approx([orig[i] for i in perm], abs=1e-12)
