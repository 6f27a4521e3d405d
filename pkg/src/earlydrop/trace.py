"""Encoder trace data model and the binary trace container.

Tensors are numpy float32 arrays (shape = dims, row-major buffer = data).
A trace bundles, for one image, everything the pruning pipeline consumes:
per-region CLS attention rows per encoder layer, CLS embeddings, optional
joint-space image/text embeddings, and the tile grid metadata.

Container layout (little-endian, bit-exact):

    bytes 0..7    ASCII "HEROTRC" + 0x00
    bytes 8..11   u32 header length H
    bytes 12..12+H UTF-8 JSON header
    payload       raw f32 tensors, each offset 64-byte aligned

Header schema:

    {"version": 1, "image_id": str, "grid": [rows, cols], "N": int,
     "num_layers": int,
     "tensors": [{"name": str, "dtype": "f32", "shape": [...],
                  "offset": int, "nbytes": int}]}

Tensor names: ``tile/{i}/cls_attn``, ``tile/{i}/cls_embed``,
``tile/{i}/clip_embed``, ``global/cls_attn``, ``global/cls_embed``,
``text/clip_embed``.  Offsets are absolute from byte 0.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadMagic,
    CorruptHeader,
    EmptyInput,
    InvariantViolation,
    NonFiniteValue,
    ShapeMismatch,
    ZeroNorm,
)

MAGIC = b"HEROTRC\x00"
CONTAINER_VERSION = 1
_ALIGN = 64

# Patch attention mass may not exceed 1 by more than this (CLS self-attention
# keeps the true row sum strictly below 1; the slack absorbs f32 rounding).
ATTN_ROW_SUM_TOL = 1e-4
UNIT_NORM_TOL = 1e-3


def _as_f32(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"tensor {name!r} contains NaN/Inf")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float32)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RegionTrace:
    """All encoder outputs for one region (a local tile or the thumbnail).

    cls_attn:   [num_layers, N] head-averaged CLS-to-patch attention rows.
    cls_embed:  [D_v] encoder CLS embedding.
    clip_embed: optional [D_clip], unit-norm joint image-text embedding.
    """

    cls_attn: np.ndarray
    cls_embed: np.ndarray
    clip_embed: np.ndarray | None = None

    @property
    def num_layers(self) -> int:
        return int(self.cls_attn.shape[0])

    @property
    def num_patches(self) -> int:
        return int(self.cls_attn.shape[1])


@dataclass(frozen=True)
class ImageTrace:
    """Complete encoder trace for one image: K tiles plus the thumbnail."""

    image_id: str
    grid_rows: int
    grid_cols: int
    tiles: tuple[RegionTrace, ...]
    thumbnail: RegionTrace
    text_embed: np.ndarray | None = None

    @property
    def K(self) -> int:
        return len(self.tiles)

    @property
    def N(self) -> int:
        return self.thumbnail.num_patches

    @property
    def num_layers(self) -> int:
        return self.thumbnail.num_layers

    @property
    def regions(self) -> tuple[RegionTrace, ...]:
        return self.tiles + (self.thumbnail,)


def _check_region(region: RegionTrace, label: str, num_layers: int, n: int) -> None:
    attn = region.cls_attn
    if attn.ndim != 2:
        raise ShapeMismatch(f"tensor {label}/cls_attn must be 2-D, got {attn.shape}")
    if attn.shape != (num_layers, n):
        raise ShapeMismatch(
            f"tensor {label}/cls_attn has shape {tuple(attn.shape)}, "
            f"expected ({num_layers}, {n})"
        )
    if not np.all(np.isfinite(attn)):
        raise NonFiniteValue(f"tensor {label}/cls_attn contains NaN/Inf")
    if np.any(attn < 0):
        raise InvariantViolation(f"tensor {label}/cls_attn has negative entries")
    row_sums = attn.sum(axis=1, dtype=np.float64)
    if np.any(row_sums > 1.0 + ATTN_ROW_SUM_TOL):
        bad = int(np.argmax(row_sums))
        raise InvariantViolation(
            f"tensor {label}/cls_attn row {bad} sums to {row_sums[bad]:.6f} > 1"
        )
    if region.cls_embed.ndim != 1 or region.cls_embed.size == 0:
        raise ShapeMismatch(f"tensor {label}/cls_embed must be a nonempty vector")
    if not np.all(np.isfinite(region.cls_embed)):
        raise NonFiniteValue(f"tensor {label}/cls_embed contains NaN/Inf")
    if region.clip_embed is not None:
        emb = region.clip_embed
        if emb.ndim != 1 or emb.size == 0:
            raise ShapeMismatch(f"tensor {label}/clip_embed must be a nonempty vector")
        if not np.all(np.isfinite(emb)):
            raise NonFiniteValue(f"tensor {label}/clip_embed contains NaN/Inf")
        norm = float(np.linalg.norm(emb.astype(np.float64)))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise InvariantViolation(
                f"tensor {label}/clip_embed has norm {norm:.6f}, expected 1"
            )


def validate_trace(trace: ImageTrace) -> None:
    """Check every type invariant; raises a TraceError subclass on failure."""
    if trace.grid_rows < 1 or trace.grid_cols < 1:
        raise InvariantViolation("grid dimensions must be positive")
    k = trace.grid_rows * trace.grid_cols
    if len(trace.tiles) != k:
        raise ShapeMismatch(
            f"grid declares {k} tiles but trace carries {len(trace.tiles)}"
        )
    num_layers = trace.thumbnail.num_layers
    n = trace.thumbnail.num_patches
    if num_layers < 1 or n < 1:
        raise ShapeMismatch("tensor global/cls_attn must have positive dims")
    _check_region(trace.thumbnail, "global", num_layers, n)
    d_v = trace.thumbnail.cls_embed.size
    clip_presence = [t.clip_embed is not None for t in trace.tiles]
    if any(clip_presence) and not all(clip_presence):
        missing = clip_presence.index(False)
        raise InvariantViolation(
            f"tensor tile/{missing}/clip_embed missing while other tiles have one"
        )
    d_clip: int | None = None
    for i, tile in enumerate(trace.tiles):
        _check_region(tile, f"tile/{i}", num_layers, n)
        if tile.cls_embed.size != d_v:
            raise ShapeMismatch(
                f"tensor tile/{i}/cls_embed has dim {tile.cls_embed.size}, "
                f"expected {d_v}"
            )
        if tile.clip_embed is not None:
            if d_clip is None:
                d_clip = tile.clip_embed.size
            elif tile.clip_embed.size != d_clip:
                raise ShapeMismatch(
                    f"tensor tile/{i}/clip_embed has dim {tile.clip_embed.size}, "
                    f"expected {d_clip}"
                )
    if trace.text_embed is not None:
        emb = trace.text_embed
        if emb.ndim != 1 or emb.size == 0:
            raise ShapeMismatch("tensor text/clip_embed must be a nonempty vector")
        if not np.all(np.isfinite(emb)):
            raise NonFiniteValue("tensor text/clip_embed contains NaN/Inf")
        norm = float(np.linalg.norm(emb.astype(np.float64)))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise InvariantViolation(
                f"tensor text/clip_embed has norm {norm:.6f}, expected 1"
            )
        if d_clip is not None and emb.size != d_clip:
            raise ShapeMismatch(
                f"tensor text/clip_embed has dim {emb.size}, expected {d_clip}"
            )


def make_trace(
    image_id: str,
    grid_rows: int,
    grid_cols: int,
    tiles: Iterable[RegionTrace],
    thumbnail: RegionTrace,
    text_embed=None,
) -> ImageTrace:
    """Build and validate an ImageTrace from array-likes (copies to f32)."""

    def region(r: RegionTrace, label: str) -> RegionTrace:
        return RegionTrace(
            cls_attn=_freeze(_as_f32(r.cls_attn, f"{label}/cls_attn")),
            cls_embed=_freeze(_as_f32(r.cls_embed, f"{label}/cls_embed")),
            clip_embed=None
            if r.clip_embed is None
            else _freeze(_as_f32(r.clip_embed, f"{label}/clip_embed")),
        )

    trace = ImageTrace(
        image_id=image_id,
        grid_rows=grid_rows,
        grid_cols=grid_cols,
        tiles=tuple(region(t, f"tile/{i}") for i, t in enumerate(tiles)),
        thumbnail=region(thumbnail, "global"),
        text_embed=None
        if text_embed is None
        else _freeze(_as_f32(text_embed, "text/clip_embed")),
    )
    validate_trace(trace)
    return trace


# -- serialization -----------------------------------------------------------

def _tensor_entries(trace: ImageTrace) -> list[tuple[str, np.ndarray]]:
    entries: list[tuple[str, np.ndarray]] = []
    for i, tile in enumerate(trace.tiles):
        entries.append((f"tile/{i}/cls_attn", tile.cls_attn))
        entries.append((f"tile/{i}/cls_embed", tile.cls_embed))
        if tile.clip_embed is not None:
            entries.append((f"tile/{i}/clip_embed", tile.clip_embed))
    entries.append(("global/cls_attn", trace.thumbnail.cls_attn))
    entries.append(("global/cls_embed", trace.thumbnail.cls_embed))
    if trace.thumbnail.clip_embed is not None:
        entries.append(("global/clip_embed", trace.thumbnail.clip_embed))
    if trace.text_embed is not None:
        entries.append(("text/clip_embed", trace.text_embed))
    return entries


def write_trace(trace: ImageTrace) -> bytes:
    """Serialize a validated trace; identical traces yield identical bytes."""
    validate_trace(trace)
    entries = _tensor_entries(trace)

    payloads = []
    tensor_meta = []
    # Offsets depend on the header length, which depends on the offsets'
    # decimal width.  Iterate until the header size stabilizes.
    header_len = 0
    for _ in range(8):
        offset = _aligned(len(MAGIC) + 4 + header_len)
        tensor_meta = []
        payloads = []
        for name, arr in entries:
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            tensor_meta.append(
                {
                    "name": name,
                    "dtype": "f32",
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": len(data),
                }
            )
            payloads.append((offset, data))
            offset = _aligned(offset + len(data))
        header = _encode_header(trace, tensor_meta)
        if len(header) == header_len:
            break
        header_len = len(header)
    else:  # pragma: no cover - header length always stabilizes
        raise AssertionError("header size failed to converge")

    total = _aligned(len(MAGIC) + 4 + header_len)
    if payloads:
        last_off, last_data = payloads[-1]
        total = last_off + len(last_data)
    out = bytearray(total)
    out[: len(MAGIC)] = MAGIC
    struct.pack_into("<I", out, len(MAGIC), header_len)
    out[12 : 12 + header_len] = header
    for off, data in payloads:
        out[off : off + len(data)] = data
    return bytes(out)


def _aligned(offset: int) -> int:
    return (offset + _ALIGN - 1) // _ALIGN * _ALIGN


def _encode_header(trace: ImageTrace, tensor_meta: list[dict]) -> bytes:
    header = {
        "version": CONTAINER_VERSION,
        "image_id": trace.image_id,
        "grid": [trace.grid_rows, trace.grid_cols],
        "N": trace.N,
        "num_layers": trace.num_layers,
        "tensors": tensor_meta,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def read_trace(data: bytes) -> ImageTrace:
    """Parse and fully validate a trace container."""
    if len(data) < len(MAGIC) + 4:
        raise BadMagic("input shorter than the container preamble")
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagic("missing trace container magic bytes")
    (header_len,) = struct.unpack_from("<I", data, len(MAGIC))
    if len(MAGIC) + 4 + header_len > len(data):
        raise CorruptHeader("declared header length exceeds input size")
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeader(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise CorruptHeader("header must be a JSON object")
    if header.get("version") != CONTAINER_VERSION:
        raise CorruptHeader(f"unsupported container version {header.get('version')!r}")
    try:
        image_id = header["image_id"]
        grid_rows, grid_cols = (int(x) for x in header["grid"])
        n = int(header["N"])
        num_layers = int(header["num_layers"])
        tensor_meta = header["tensors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptHeader(f"header field missing or malformed: {exc}") from exc
    if not isinstance(image_id, str) or not isinstance(tensor_meta, list):
        raise CorruptHeader("header field has the wrong JSON type")
    if grid_rows < 1 or grid_cols < 1 or n < 1 or num_layers < 1:
        raise CorruptHeader("grid, N, and num_layers must be positive")

    tensors: dict[str, np.ndarray] = {}
    for meta in tensor_meta:
        try:
            name = meta["name"]
            dtype = meta["dtype"]
            shape = tuple(int(s) for s in meta["shape"])
            offset = int(meta["offset"])
            nbytes = int(meta["nbytes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptHeader(f"tensor entry malformed: {exc}") from exc
        if dtype != "f32":
            raise CorruptHeader(f"tensor {name!r} has unsupported dtype {dtype!r}")
        if name in tensors:
            raise CorruptHeader(f"tensor {name!r} declared twice")
        count = math.prod(shape) if shape else 0
        if any(s < 1 for s in shape) or count * 4 != nbytes:
            raise ShapeMismatch(
                f"tensor {name!r} declares shape {shape} but {nbytes} bytes"
            )
        if offset % _ALIGN != 0:
            raise CorruptHeader(f"tensor {name!r} offset {offset} not 64-byte aligned")
        if offset < 12 + header_len or offset + nbytes > len(data):
            raise CorruptHeader(f"tensor {name!r} payload out of bounds")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue(f"tensor {name!r} contains NaN/Inf")
        tensors[name] = _freeze(arr)

    def take(name: str, required: bool = True) -> np.ndarray | None:
        if name not in tensors:
            if required:
                raise CorruptHeader(f"tensor {name!r} missing from container")
            return None
        return tensors.pop(name)

    tiles = []
    for i in range(grid_rows * grid_cols):
        tiles.append(
            RegionTrace(
                cls_attn=take(f"tile/{i}/cls_attn"),
                cls_embed=take(f"tile/{i}/cls_embed"),
                clip_embed=take(f"tile/{i}/clip_embed", required=False),
            )
        )
    thumbnail = RegionTrace(
        cls_attn=take("global/cls_attn"),
        cls_embed=take("global/cls_embed"),
        clip_embed=take("global/clip_embed", required=False),
    )
    text_embed = take("text/clip_embed", required=False)
    if tensors:
        raise CorruptHeader(f"unrecognized tensors in container: {sorted(tensors)}")

    trace = ImageTrace(
        image_id=image_id,
        grid_rows=grid_rows,
        grid_cols=grid_cols,
        tiles=tuple(tiles),
        thumbnail=thumbnail,
        text_embed=text_embed,
    )
    if thumbnail.cls_attn.shape != (num_layers, n):
        raise ShapeMismatch(
            "tensor 'global/cls_attn' disagrees with header N/num_layers"
        )
    validate_trace(trace)
    return trace


# -- numeric primitives ------------------------------------------------------

def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two equal-length vectors, clamped to [-1, 1]."""
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    if va.shape != vb.shape:
        raise ShapeMismatch(f"vector dims differ: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ZeroNorm("cosine similarity undefined for zero-norm vector")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def softmax(scores: Sequence[float]) -> np.ndarray:
    """Numerically stable softmax (max-subtracted); output sums to 1."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("softmax over an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue("softmax input contains NaN/Inf")
    shifted = arr - arr.max()
    e = np.exp(shifted)
    return e / e.sum()
