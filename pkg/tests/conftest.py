"""Shared fixtures: tiny corpora on disk and the five-sports golden matrix."""

from __future__ import annotations

import numpy as np
import pytest

from lastlayer.image import Image, save_png

# Golden five-class confusion matrix (rows actual, columns predicted) used
# by the metrics reproduction tests. Row sums are 120 each, trace is 465.
SPORTS_CLASSES = ("nouka_baich", "danguli", "kabadi", "kanamachi", "latthi_khela")
SPORTS_CONFUSION = np.array(
    [
        [101, 0, 10, 2, 7],
        [2, 97, 5, 12, 4],
        [4, 1, 87, 22, 6],
        [4, 5, 16, 91, 4],
        [6, 1, 22, 2, 89],
    ],
    dtype=np.int64,
)


def random_image(rng: np.random.Generator, width: int = 16, height: int = 12) -> Image:
    return Image(pixels=rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def make_corpus(root, classes, images_per_class, rng, width=16, height=12):
    """Write a tiny directory-per-class PNG corpus; returns the root."""
    for name in classes:
        for i in range(images_per_class):
            save_png(random_image(rng, width, height), root / name / f"img_{i:03d}.png")
    return root


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260810)


@pytest.fixture
def tiny_corpus(tmp_path, rng):
    return make_corpus(tmp_path / "corpus", ("ants", "bees"), 4, rng)
