"""Frozen bottleneck feature extractor.

The built-in reference extractor is a small fixed CNN with seeded, never
trained weights: pixels scaled to [0,1], two conv/relu/maxpool stages, then
a fixed random linear projection of the flattened activation volume down to
``dim`` features. There are no bias terms, so an all-black input maps to
the zero vector. Any two extractors with the same (name, version,
weights_digest) produce identical output for identical input.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ExtractorError
from .image import Image
from .nn import conv2d, maxpool2d, relu

__all__ = ["ExtractorIdentity", "ReferenceExtractor"]


@dataclass(frozen=True)
class ExtractorIdentity:
    name: str
    version: str
    dim: int
    weights_digest: str


class ReferenceExtractor:
    """Deterministic frozen feature map with an invocation counter.

    ``invocations`` counts actual feature computations, which is how cache
    hit behavior is observable from the outside.
    """

    NAME = "reference"
    VERSION = "1"

    def __init__(
        self,
        input_width: int = 200,
        input_height: int = 150,
        dim: int = 128,
        seed: int = 42,
    ) -> None:
        if input_width < 4 or input_height < 4:
            raise ExtractorError(
                f"input resolution too small for two pooling stages: {input_width}x{input_height}"
            )
        self.input_width = input_width
        self.input_height = input_height
        self.dim = dim
        self.seed = seed
        self.invocations = 0

        rng = np.random.default_rng(seed)
        self._conv1 = (rng.standard_normal((8, 3, 3, 3)) / math.sqrt(27)).astype(np.float32)
        self._conv2 = (rng.standard_normal((16, 3, 3, 8)) / math.sqrt(72)).astype(np.float32)
        h = input_height // 2 // 2
        w = input_width // 2 // 2
        flat = h * w * 16
        # 16/sqrt(flat) keeps feature rms near unity for [0,1]-range inputs,
        # so the default final-layer learning rate converges at desk scale
        self._proj = (rng.standard_normal((flat, dim)) * (16.0 / math.sqrt(flat))).astype(
            np.float32
        )

        digest = hashlib.sha256()
        for weights in (self._conv1, self._conv2, self._proj):
            digest.update(weights.astype("<f4").tobytes())
        self.identity = ExtractorIdentity(
            name=self.NAME, version=self.VERSION, dim=dim, weights_digest=digest.hexdigest()
        )

    def extract(self, img: Image) -> np.ndarray:
        """Compute the feature vector for one image (float32, length ``dim``)."""
        if (img.width, img.height) != (self.input_width, self.input_height):
            raise ExtractorError(
                f"image is {img.width}x{img.height}, extractor expects "
                f"{self.input_width}x{self.input_height}"
            )
        self.invocations += 1
        x = img.pixels.astype(np.float32) / np.float32(255.0)
        x = maxpool2d(relu(conv2d(x, self._conv1, stride=1, padding="same")))
        x = maxpool2d(relu(conv2d(x, self._conv2, stride=1, padding="same")))
        features = x.reshape(-1) @ self._proj
        if not np.all(np.isfinite(features)):
            raise ExtractorError("non-finite feature values (corrupted input?)")
        return features.astype(np.float32)
