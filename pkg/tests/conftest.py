import numpy as np
import pytest

from reinpaint.image import ImageBuffer, save_image
from reinpaint.image import resize_array_bilinear


def random_image(w: int, h: int, seed: int) -> ImageBuffer:
    rng = np.random.default_rng(seed)
    return ImageBuffer(rng.random((h, w, 3)))


def smooth_image(w: int, h: int, seed: int) -> ImageBuffer:
    """Natural-ish test image: two octaves of upsampled low-resolution noise."""
    rng = np.random.default_rng(seed)
    coarse = resize_array_bilinear(rng.random((6, 6, 3)), w, h)
    fine = resize_array_bilinear(rng.random((16, 16, 3)), w, h)
    return ImageBuffer(np.clip(0.7 * coarse + 0.3 * fine, 0.0, 1.0))


def build_corpus(directory, count: int, size: int, seed: int, smooth: bool = True):
    """Write a small deterministic PNG corpus; returns the image ids."""
    directory.mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(count):
        img = (smooth_image if smooth else random_image)(size, size, seed + i)
        image_id = f"img_{i:03d}"
        save_image(img, directory / f"{image_id}.png")
        ids.append(image_id)
    return ids


@pytest.fixture
def tiny_corpus(tmp_path):
    corpus = tmp_path / "corpus"
    ids = build_corpus(corpus, count=3, size=32, seed=11)
    return corpus, ids
