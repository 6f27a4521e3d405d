"""Tile-grid geometry for high-resolution preprocessing.

Reproduces the anyres-style pipeline shape: pick the target resolution with
the closest aspect ratio, pad the shorter side so the padded aspect matches,
resize to the target, and cut non-overlapping 336x336 tiles.  Only geometry
is computed here; pixel resampling belongs to the exporter.

Rectangles are (x0, y0, x1, y1), half-open, in integer pixels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

from .errors import IndexOutOfRange

TILE_SIZE = 336
PATCH_SIZE = 14
PATCHES_PER_SIDE = TILE_SIZE // PATCH_SIZE  # 24
PATCHES_PER_TILE = PATCHES_PER_SIDE**2  # 576

# (width, height) targets and their (cols, rows) grids, in precedence order.
TARGET_RESOLUTIONS: tuple[tuple[int, int], ...] = (
    (336, 672),
    (672, 336),
    (672, 672),
    (1008, 336),
    (336, 1008),
)
TARGET_GRIDS: tuple[tuple[int, int], ...] = (
    (1, 2),
    (2, 1),
    (2, 2),
    (3, 1),
    (1, 3),
)

Rect = tuple[int, int, int, int]


def rect_is_empty(rect: Rect) -> bool:
    x0, y0, x1, y1 = rect
    return x1 <= x0 or y1 <= y0


@dataclass(frozen=True)
class TilingPlan:
    """Resolved geometry for one image: target, grid, padding, scale, tiles."""

    image_w: int
    image_h: int
    target_w: int
    target_h: int
    grid_cols: int
    grid_rows: int
    pad_left: int
    pad_right: int
    pad_top: int
    pad_bottom: int
    scale_x: float
    scale_y: float
    tile_size: int
    tile_rects: tuple[Rect, ...]

    @property
    def padded_w(self) -> int:
        return self.image_w + self.pad_left + self.pad_right

    @property
    def padded_h(self) -> int:
        return self.image_h + self.pad_top + self.pad_bottom

    @property
    def num_tiles(self) -> int:
        return self.grid_cols * self.grid_rows

    def to_json(self) -> str:
        d = asdict(self)
        d["tile_rects"] = [list(r) for r in self.tile_rects]
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TilingPlan":
        d = json.loads(text)
        d["tile_rects"] = tuple(tuple(int(v) for v in r) for r in d["tile_rects"])
        return cls(**d)


def plan_tiling(image_w: int, image_h: int) -> TilingPlan:
    """Choose the target resolution and derive the full tiling geometry.

    The target is the entry whose aspect ratio is nearest in log space to the
    image's; ties resolve to the earlier list entry.  Padding is applied along
    one axis only, split evenly with the extra pixel going right/bottom.
    """
    if image_w < 1 or image_h < 1:
        raise ValueError("image dimensions must be positive")

    log_aspect = math.log(image_w / image_h)
    best = 0
    best_dist = math.inf
    for idx, (tw, th) in enumerate(TARGET_RESOLUTIONS):
        dist = abs(log_aspect - math.log(tw / th))
        if dist < best_dist:
            best = idx
            best_dist = dist
    target_w, target_h = TARGET_RESOLUTIONS[best]
    grid_cols, grid_rows = TARGET_GRIDS[best]

    # Pad the axis that falls short of the target aspect; ceil keeps the
    # padded canvas at least as wide/tall as the exact rational requirement.
    pad_left = pad_right = pad_top = pad_bottom = 0
    if image_w * target_h < image_h * target_w:
        padded_w = -(-image_h * target_w // target_h)
        total = padded_w - image_w
        pad_left = total // 2
        pad_right = total - pad_left
    elif image_w * target_h > image_h * target_w:
        padded_h = -(-image_w * target_h // target_w)
        total = padded_h - image_h
        pad_top = total // 2
        pad_bottom = total - pad_top

    padded_w = image_w + pad_left + pad_right
    padded_h = image_h + pad_top + pad_bottom
    rects = tuple(
        (c * TILE_SIZE, r * TILE_SIZE, (c + 1) * TILE_SIZE, (r + 1) * TILE_SIZE)
        for r in range(grid_rows)
        for c in range(grid_cols)
    )
    return TilingPlan(
        image_w=image_w,
        image_h=image_h,
        target_w=target_w,
        target_h=target_h,
        grid_cols=grid_cols,
        grid_rows=grid_rows,
        pad_left=pad_left,
        pad_right=pad_right,
        pad_top=pad_top,
        pad_bottom=pad_bottom,
        scale_x=target_w / padded_w,
        scale_y=target_h / padded_h,
        tile_size=TILE_SIZE,
        tile_rects=rects,
    )


def _inv_x(plan: TilingPlan, x: int) -> int:
    # Inverse of the pad+resize map for a vertical grid line at target x.
    # Consistent flooring makes adjacent preimages share boundaries exactly.
    return x * plan.padded_w // plan.target_w - plan.pad_left


def _inv_y(plan: TilingPlan, y: int) -> int:
    return y * plan.padded_h // plan.target_h - plan.pad_top


def map_patch_to_image(plan: TilingPlan, tile_index: int, patch_index: int) -> Rect:
    """Source-image rectangle covered by one 14x14 patch of one tile.

    Inverts the resize and padding; the result is clipped to the image, so
    patches that fall wholly inside padding come back empty.
    """
    if not 0 <= tile_index < plan.num_tiles:
        raise IndexOutOfRange(f"tile index {tile_index} outside grid")
    if not 0 <= patch_index < PATCHES_PER_TILE:
        raise IndexOutOfRange(f"patch index {patch_index} outside tile")
    tx0, ty0, _, _ = plan.tile_rects[tile_index]
    pr, pc = divmod(patch_index, PATCHES_PER_SIDE)
    x0 = tx0 + pc * PATCH_SIZE
    y0 = ty0 + pr * PATCH_SIZE
    sx0 = min(max(_inv_x(plan, x0), 0), plan.image_w)
    sx1 = min(max(_inv_x(plan, x0 + PATCH_SIZE), 0), plan.image_w)
    sy0 = min(max(_inv_y(plan, y0), 0), plan.image_h)
    sy1 = min(max(_inv_y(plan, y0 + PATCH_SIZE), 0), plan.image_h)
    return (sx0, sy0, sx1, sy1)


def thumbnail_patch_rect(image_w: int, image_h: int, patch_index: int) -> Rect:
    """Source rectangle for one thumbnail patch (whole image resized to 336^2).

    The thumbnail path resizes without padding, so the 24x24 patch grid maps
    onto the full image with boundary-consistent flooring.
    """
    if not 0 <= patch_index < PATCHES_PER_TILE:
        raise IndexOutOfRange(f"patch index {patch_index} outside thumbnail")
    pr, pc = divmod(patch_index, PATCHES_PER_SIDE)
    x0 = pc * PATCH_SIZE * image_w // TILE_SIZE
    x1 = (pc + 1) * PATCH_SIZE * image_w // TILE_SIZE
    y0 = pr * PATCH_SIZE * image_h // TILE_SIZE
    y1 = (pr + 1) * PATCH_SIZE * image_h // TILE_SIZE
    return (x0, y0, x1, y1)
