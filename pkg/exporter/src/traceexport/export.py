"""Trace export: run an encoder over tiles + thumbnail, emit a container.

Per region, one forward pass yields all per-layer CLS-to-patch attention
rows (head-averaged, post-softmax), the post-layernorm CLS embedding, and
the L2-normalized joint-space image embedding (projection-head output); the
instruction goes through the text tower the same way.  The container is
written with the earlydrop reference writer, so every export passes
read_trace validation by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from earlydrop.tiling import TILE_SIZE, plan_tiling
from earlydrop.trace import RegionTrace, make_trace, write_trace

from .encoder import EncoderBundle, load_encoder
from .errors import PreprocessMismatch
from .preprocess import prepare_regions, to_pixel_tensor


@dataclass(frozen=True)
class ExportJob:
    """One image + instruction to turn into a trace container."""

    image: Path
    instruction: str
    encoder: str
    output: Path
    seed: int = 0
    image_id: str | None = None


@dataclass(frozen=True)
class RegionTensors:
    cls_attn: np.ndarray  # [num_layers, N]
    cls_embed: np.ndarray  # [D_v]
    clip_embed: np.ndarray  # [D_clip], unit norm


def _l2_normalize(vec: torch.Tensor) -> np.ndarray:
    arr = vec.detach().to(torch.float32).numpy()
    return arr / np.linalg.norm(arr)


def encode_region(bundle: EncoderBundle, image: Image.Image) -> RegionTensors:
    pixels = to_pixel_tensor(image)[None]
    with torch.no_grad():
        out = bundle.model.vision_model(
            pixel_values=pixels, output_attentions=True, return_dict=True
        )
        projected = bundle.model.visual_projection(out.pooler_output)
    # attentions[l]: [1, heads, 1+N, 1+N]; CLS sits at sequence position 0.
    rows = [a[0].mean(dim=0)[0, 1:] for a in out.attentions]
    cls_attn = torch.stack(rows).to(torch.float32).numpy()
    return RegionTensors(
        cls_attn=cls_attn,
        cls_embed=out.pooler_output[0].to(torch.float32).numpy(),
        clip_embed=_l2_normalize(projected[0]),
    )


def encode_text(bundle: EncoderBundle, text: str) -> np.ndarray:
    ids = torch.tensor([bundle.tokenize(text)], dtype=torch.long)
    with torch.no_grad():
        out = bundle.model.text_model(input_ids=ids, return_dict=True)
        projected = bundle.model.text_projection(out.pooler_output)
    return _l2_normalize(projected[0])


def export_trace(job: ExportJob, bundle: EncoderBundle | None = None) -> Path:
    """Run the full export; returns the written container path."""
    if bundle is None:
        bundle = load_encoder(job.encoder, seed=job.seed)
    if bundle.image_size != TILE_SIZE:
        raise PreprocessMismatch(
            f"encoder expects {bundle.image_size}px inputs, tiling is {TILE_SIZE}px"
        )
    with Image.open(job.image) as img:
        img = img.convert("RGB")
        plan = plan_tiling(*img.size)
        tile_images, thumb_image = prepare_regions(img, plan)

    expected_n = bundle.patches_per_region
    regions = [encode_region(bundle, im) for im in tile_images]
    thumb = encode_region(bundle, thumb_image)
    if thumb.cls_attn.shape[1] != expected_n:  # pragma: no cover - config guard
        raise PreprocessMismatch(
            f"encoder produced {thumb.cls_attn.shape[1]} patch tokens, "
            f"expected {expected_n}"
        )
    text_embed = encode_text(bundle, job.instruction)

    trace = make_trace(
        image_id=job.image_id or Path(job.image).stem,
        grid_rows=plan.grid_rows,
        grid_cols=plan.grid_cols,
        tiles=[
            RegionTrace(
                cls_attn=r.cls_attn, cls_embed=r.cls_embed, clip_embed=r.clip_embed
            )
            for r in regions
        ],
        thumbnail=RegionTrace(cls_attn=thumb.cls_attn, cls_embed=thumb.cls_embed),
        text_embed=text_embed,
    )
    job.output.parent.mkdir(parents=True, exist_ok=True)
    job.output.write_bytes(write_trace(trace))
    sidecar = {
        "encoder": bundle.name,
        "seed": job.seed,
        "instruction": job.instruction,
        "image": str(job.image),
        "tiling_plan": json.loads(plan.to_json()),
        # Joint-space embeddings are projection-head outputs, L2-normalized;
        # CLS embeddings are the post-layernorm pooled vision outputs.
        "embedding_space": "projection_head_l2_normalized",
        "cls_embedding": "post_layernorm_pooled",
        "attention": "post_softmax_head_mean",
    }
    job.output.with_suffix(job.output.suffix + ".meta.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True)
    )
    return job.output


def validate_against_planner(image_w: int, image_h: int) -> dict:
    """Compare the planner's grid with the reference anyres selector.

    The reference selector (when the installed transformers provides one)
    maximizes effective resolution over (height, width) pinpoints, while the
    planner matches log-aspect; this report makes any divergence, including
    the (W, H) tuple orientation, visible without failing.
    """
    plan = plan_tiling(image_w, image_h)
    report = {
        "image": [image_w, image_h],
        "planner": {
            "target_wh": [plan.target_w, plan.target_h],
            "grid_cols_rows": [plan.grid_cols, plan.grid_rows],
        },
    }
    try:
        from transformers.image_processing_utils import select_best_resolution
    except ImportError:
        report["reference"] = None
        report["agrees"] = None
        return report
    pinpoints_hw = [[672, 336], [336, 672], [672, 672], [336, 1008], [1008, 336]]
    best_h, best_w = select_best_resolution((image_h, image_w), pinpoints_hw)
    ref_grid = [best_w // TILE_SIZE, best_h // TILE_SIZE]
    report["reference"] = {
        "target_wh": [best_w, best_h],
        "grid_cols_rows": ref_grid,
    }
    report["agrees"] = ref_grid == [plan.grid_cols, plan.grid_rows]
    return report
