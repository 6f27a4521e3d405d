"""Shared exporter fixtures: one slim encoder per session, synthetic photos."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from traceexport import load_encoder


@pytest.fixture(scope="session")
def slim_bundle():
    return load_encoder("builtin:vit-slim-336", seed=0)


def synthetic_photo(width: int, height: int, seed: int = 0) -> Image.Image:
    """A deterministic non-trivial RGB image (gradients plus a bright blob)."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width]
    r = (255 * x / max(width - 1, 1)).astype(np.uint8)
    g = (255 * y / max(height - 1, 1)).astype(np.uint8)
    b = rng.integers(0, 60, size=(height, width), dtype=np.uint8)
    img = np.stack([r, g, b], axis=-1)
    cx, cy = width // 3, height // 3
    rad = max(3, min(width, height) // 6)
    blob = (x - cx) ** 2 + (y - cy) ** 2 <= rad**2
    img[blob] = (250, 250, 240)
    return Image.fromarray(img, mode="RGB")


@pytest.fixture
def photo_square(tmp_path):
    path = tmp_path / "square.png"
    synthetic_photo(336, 336, seed=1).save(path)
    return path


@pytest.fixture
def photo_wide(tmp_path):
    path = tmp_path / "wide.png"
    synthetic_photo(900, 300, seed=2).save(path)
    return path
