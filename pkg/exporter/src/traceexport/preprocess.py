"""Real pixel preprocessing mirroring the planned tiling geometry.

The geometry (target resolution, padding, grid) comes from the earlydrop
planner; this module performs the actual pad, resize, crop, and normalize
steps on PIL images and emits model-ready tensors.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image

from earlydrop.tiling import TILE_SIZE, TilingPlan

# Standard CLIP channel statistics.
IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)
PAD_COLOR = tuple(round(255 * m) for m in IMAGE_MEAN)


def prepare_regions(image: Image.Image, plan: TilingPlan) -> tuple[list[Image.Image], Image.Image]:
    """Pad + resize + cut tiles per the plan; thumbnail resizes the original."""
    img = image.convert("RGB")
    if img.size != (plan.image_w, plan.image_h):
        raise ValueError(
            f"plan is for {plan.image_w}x{plan.image_h}, image is {img.size}"
        )
    canvas = Image.new("RGB", (plan.padded_w, plan.padded_h), PAD_COLOR)
    canvas.paste(img, (plan.pad_left, plan.pad_top))
    resized = canvas.resize((plan.target_w, plan.target_h), Image.BICUBIC)
    tiles = [resized.crop(rect) for rect in plan.tile_rects]
    thumbnail = img.resize((TILE_SIZE, TILE_SIZE), Image.BICUBIC)
    return tiles, thumbnail


def to_pixel_tensor(image: Image.Image) -> torch.Tensor:
    """HWC uint8 -> normalized CHW float32 tensor."""
    arr = np.asarray(image.convert("RGB"), dtype=np.float32) / 255.0
    arr = (arr - np.array(IMAGE_MEAN, dtype=np.float32)) / np.array(
        IMAGE_STD, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())
