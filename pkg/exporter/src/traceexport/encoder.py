"""CLIP-style encoder loading and text tokenization.

Encoders resolve in two ways:

* ``builtin:<name>``  constructs a randomly initialized (seeded) CLIP model
  from a fixed architecture spec, entirely offline.  Useful for conformance
  testing and pipelines that only need structurally valid traces.
* anything else is treated as a Hugging Face model name or local path and
  loaded with pretrained weights and the real tokenizer.

Builtin models have no trained vocabulary, so instruction text is mapped to
token ids with a deterministic hash tokenizer; real models use their own.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import torch
from transformers import CLIPConfig, CLIPModel, CLIPTextConfig, CLIPVisionConfig

from .errors import ModelLoadError

# Architecture specs: (vision kwargs, text kwargs).  Both keep the L/336
# geometry (24 layers, 14px patches at 336px -> 576 patch tokens); the slim
# variant shrinks widths so CPU runs stay fast.
_BUILTIN_SPECS = {
    "vit-l-336": (
        dict(
            hidden_size=1024,
            intermediate_size=4096,
            num_hidden_layers=24,
            num_attention_heads=16,
            image_size=336,
            patch_size=14,
            projection_dim=768,
        ),
        dict(
            hidden_size=768,
            intermediate_size=3072,
            num_hidden_layers=12,
            num_attention_heads=12,
            vocab_size=49408,
            max_position_embeddings=77,
            projection_dim=768,
            bos_token_id=49406,
            eos_token_id=49407,
        ),
    ),
    "vit-slim-336": (
        dict(
            hidden_size=64,
            intermediate_size=128,
            num_hidden_layers=24,
            num_attention_heads=4,
            image_size=336,
            patch_size=14,
            projection_dim=32,
        ),
        dict(
            hidden_size=32,
            intermediate_size=64,
            num_hidden_layers=2,
            num_attention_heads=2,
            vocab_size=1024,
            max_position_embeddings=77,
            projection_dim=32,
            bos_token_id=0,
            eos_token_id=1,
        ),
    ),
}


@dataclass
class EncoderBundle:
    """A ready-to-run model plus the pieces the export pipeline needs."""

    name: str
    model: CLIPModel
    tokenize: Callable[[str], list[int]]
    image_size: int
    patch_size: int
    num_layers: int

    @property
    def patches_per_region(self) -> int:
        return (self.image_size // self.patch_size) ** 2


def hash_token_ids(
    text: str, vocab_size: int, bos: int, eos: int, max_len: int = 77
) -> list[int]:
    """Deterministic stand-in tokenizer for randomly initialized text towers.

    Words hash into the id range outside the special tokens; output is
    [bos, w1.., eos], truncated to the position limit.  Semantics-free by
    construction, which is all an untrained tower can use anyway.
    """
    reserved = sorted({bos, eos})
    free = [i for i in range(vocab_size) if i not in reserved]
    if not free:
        raise ModelLoadError("vocabulary too small for the hash tokenizer")
    ids = [bos]
    for word in text.lower().split():
        if len(ids) >= max_len - 1:
            break
        digest = hashlib.sha256(word.encode("utf-8")).digest()
        ids.append(free[int.from_bytes(digest[:8], "little") % len(free)])
    ids.append(eos)
    return ids


def _build_builtin(name: str, seed: int) -> EncoderBundle:
    vision_kwargs, text_kwargs = _BUILTIN_SPECS[name]
    config = CLIPConfig(
        vision_config=CLIPVisionConfig(**vision_kwargs).to_dict(),
        text_config=CLIPTextConfig(**text_kwargs).to_dict(),
        projection_dim=vision_kwargs["projection_dim"],
    )
    torch.manual_seed(seed)
    model = CLIPModel(config)
    text_cfg = model.config.text_config

    def tokenize(text: str) -> list[int]:
        return hash_token_ids(
            text,
            vocab_size=text_cfg.vocab_size,
            bos=text_cfg.bos_token_id,
            eos=text_cfg.eos_token_id,
            max_len=text_cfg.max_position_embeddings,
        )

    return _finalize(f"builtin:{name}", model, tokenize)


def _load_pretrained(name_or_path: str) -> EncoderBundle:
    from transformers import AutoTokenizer

    try:
        model = CLIPModel.from_pretrained(name_or_path)
        tokenizer = AutoTokenizer.from_pretrained(name_or_path)
    except Exception as exc:
        raise ModelLoadError(f"cannot load encoder {name_or_path!r}: {exc}") from exc

    def tokenize(text: str) -> list[int]:
        return tokenizer(text, truncation=True).input_ids

    return _finalize(name_or_path, model, tokenize)


def _finalize(name, model, tokenize) -> EncoderBundle:
    # Eager attention keeps per-layer attention outputs available.
    model.set_attn_implementation("eager")
    model.eval()
    vision_cfg = model.config.vision_config
    return EncoderBundle(
        name=name,
        model=model,
        tokenize=tokenize,
        image_size=vision_cfg.image_size,
        patch_size=vision_cfg.patch_size,
        num_layers=vision_cfg.num_hidden_layers,
    )


def load_encoder(spec: str, seed: int = 0) -> EncoderBundle:
    """Resolve an encoder spec (``builtin:<name>`` or HF name/path)."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in _BUILTIN_SPECS:
            raise ModelLoadError(
                f"unknown builtin encoder {name!r}; have {sorted(_BUILTIN_SPECS)}"
            )
        return _build_builtin(name, seed)
    return _load_pretrained(spec)
