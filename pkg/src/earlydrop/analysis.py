"""Attention-dynamics studies over trace corpora.

Two analyses: (1) the layer-by-layer cosine-similarity structure of CLS
attention rows, with a two-block split detector that locates the depth where
attention behavior flips; (2) agreement between the top-k attended thumbnail
patches and a salient-object mask, measured as IoU at patch granularity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyCorpus, LayerOutOfRange, ZeroNorm
from .tiling import PATCHES_PER_TILE, TilingPlan, thumbnail_patch_rect
from .trace import ImageTrace, RegionTrace


@dataclass(frozen=True)
class LayerSimilarityMatrix:
    """Mean pairwise cosine of CLS attention rows, averaged over a corpus."""

    sims: np.ndarray  # [num_layers, num_layers]

    @property
    def num_layers(self) -> int:
        return int(self.sims.shape[0])


@dataclass(frozen=True)
class SaliencyMask:
    """Pixel-level foreground mask for one image (True = salient)."""

    image_id: str
    width: int
    height: int
    bitmap: np.ndarray  # bool [height, width]


def _select_regions(trace: ImageTrace, region: str) -> list[RegionTrace]:
    if region == "thumbnail":
        return [trace.thumbnail]
    if region == "tiles":
        return list(trace.tiles)
    if region == "all":
        return list(trace.regions)
    raise ValueError(f"region selector must be thumbnail/tiles/all, got {region!r}")


def layer_similarity(
    traces: Iterable[ImageTrace], region: str = "thumbnail"
) -> LayerSimilarityMatrix:
    """Average the [L, L] cosine matrix of attention rows over corpus regions."""
    acc: np.ndarray | None = None
    count = 0
    depth: int | None = None
    for trace in traces:
        if depth is None:
            depth = trace.num_layers
        elif trace.num_layers != depth:
            raise DimensionMismatch(
                f"trace {trace.image_id!r} has {trace.num_layers} layers, "
                f"corpus started with {depth}"
            )
        for r in _select_regions(trace, region):
            rows = r.cls_attn.astype(np.float64)
            norms = np.linalg.norm(rows, axis=1)
            if np.any(norms == 0.0):
                bad = int(np.argmin(norms))
                raise ZeroNorm(
                    f"trace {trace.image_id!r} has an all-zero attention row "
                    f"at layer {bad + 1}"
                )
            unit = rows / norms[:, None]
            gram = np.clip(unit @ unit.T, -1.0, 1.0)
            acc = gram if acc is None else acc + gram
            count += 1
    if acc is None:
        raise EmptyCorpus("layer similarity over an empty corpus")
    return LayerSimilarityMatrix(sims=acc / count)


def detect_stages(matrix: LayerSimilarityMatrix) -> int:
    """Boundary b (1-based, layers 1..b vs b+1..L) maximizing block contrast.

    Contrast is mean within-block similarity (pairs pooled over both blocks)
    minus mean cross-block similarity; ties resolve to the smallest b.
    """
    s = matrix.sims
    depth = matrix.num_layers
    if depth < 2:
        raise ValueError("need at least two layers to split")
    iu = np.triu_indices(depth, k=1)
    best_b = 1
    best_score = -np.inf
    for b in range(1, depth):
        upper_rows = iu[0] < b
        upper_cols = iu[1] < b
        within = upper_rows & (upper_cols)  # both in block 1
        within |= (~upper_rows) & (~upper_cols)  # both in block 2
        cross = upper_rows & (~upper_cols)
        within_vals = s[iu[0][within], iu[1][within]]
        cross_vals = s[iu[0][cross], iu[1][cross]]
        within_mean = float(within_vals.mean()) if within_vals.size else 0.0
        score = within_mean - float(cross_vals.mean())
        if score > best_score:
            best_score = score
            best_b = b
    return best_b


def load_pgm_mask(path, image_id: str | None = None) -> SaliencyMask:
    """Read an 8-bit grayscale PGM (P5 or P2); nonzero pixels are salient."""
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    # Header tokens separated by whitespace, with # comments to end of line.
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(raw[start:pos])
    magic, w_s, h_s, maxval_s = fields
    width, height, maxval = int(w_s), int(h_s), int(maxval_s)
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    elif magic == b"P2":
        values = raw[pos:].split()
        if len(values) < width * height:
            raise ValueError(f"{path}: truncated P2 pixel data")
        pixels = np.array([int(v) for v in values[: width * height]], dtype=np.uint8)
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    bitmap = pixels.reshape(height, width) != 0
    return SaliencyMask(
        image_id=image_id or Path(path).stem,
        width=width,
        height=height,
        bitmap=bitmap,
    )


def salient_patches(mask: SaliencyMask, image_w: int, image_h: int) -> set[int]:
    """Thumbnail patches whose source rect is majority-covered by the mask."""
    if (mask.width, mask.height) != (image_w, image_h):
        raise DimensionMismatch(
            f"mask is {mask.width}x{mask.height}, image is {image_w}x{image_h}"
        )
    out: set[int] = set()
    for p in range(PATCHES_PER_TILE):
        x0, y0, x1, y1 = thumbnail_patch_rect(image_w, image_h, p)
        area = (x1 - x0) * (y1 - y0)
        if area <= 0:
            continue
        covered = int(mask.bitmap[y0:y1, x0:x1].sum())
        if covered * 2 > area:
            out.add(p)
    return out


def saliency_iou(
    trace: ImageTrace,
    plan: TilingPlan,
    mask: SaliencyMask,
    layer: int,
    k: int = 50,
) -> float:
    """IoU between the thumbnail's top-k attended patches and salient patches.

    The thumbnail covers the whole image at 336^2, so patch provenance maps
    straight onto the mask; a patch is salient when over half its source
    pixels fall inside the mask.
    """
    if not 1 <= layer <= trace.num_layers:
        raise LayerOutOfRange(f"layer {layer} beyond depth {trace.num_layers}")
    if not 0 < k <= trace.N:
        raise ValueError(f"k {k} outside (0, {trace.N}]")
    row = trace.thumbnail.cls_attn[layer - 1].astype(np.float64)
    order = np.argsort(-row, kind="stable")
    topk = set(int(i) for i in order[:k])
    salient = salient_patches(mask, plan.image_w, plan.image_h)
    union = topk | salient
    if not union:
        return 0.0
    return len(topk & salient) / len(union)


def write_similarity_csv(matrix: LayerSimilarityMatrix, path) -> None:
    """Emit (layer, layer, value) rows, 1-based indices."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer_p", "layer_q", "cosine"])
        for p in range(matrix.num_layers):
            for q in range(matrix.num_layers):
                writer.writerow([p + 1, q + 1, f"{matrix.sims[p, q]:.6f}"])


def write_iou_csv(rows: Sequence[tuple[int, float]], path) -> None:
    """Emit (layer, mean_iou) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "mean_iou"])
        for layer, value in rows:
            writer.writerow([layer, f"{value:.6f}"])
