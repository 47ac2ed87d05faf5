"""RGB raster type plus PNG/JPEG load/save and content hashing.

Pixels are stored as a height x width x 3 uint8 array (row-major, 8 bits
per channel). Pillow is used only as the codec; all resampling math lives
in :mod:`lastlayer.augment`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import AugmentError

__all__ = ["Image", "load_image", "save_png", "file_sha256"]


@dataclass(frozen=True)
class Image:
    """Decoded RGB image.

    ``source_hash`` carries the SHA-256 hex digest of the encoded file the
    pixels came from, when known; it is the key images are cached under.
    """

    pixels: np.ndarray
    source_hash: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise AugmentError(f"expected HxWx3 pixel array, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise AugmentError(f"expected uint8 pixels, got {px.dtype}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise AugmentError(f"empty image: shape {px.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def content_hash(self) -> str:
        """Hash of the source file when known, else of the raw pixel buffer."""
        if self.source_hash is not None:
            return self.source_hash
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}".encode())
        h.update(np.ascontiguousarray(self.pixels).tobytes())
        return h.hexdigest()


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_image(path: Path) -> Image:
    """Decode a PNG/JPEG file to RGB. Raises on undecodable input."""
    path = Path(path)
    raw = path.read_bytes()
    with PILImage.open(path) as im:
        im.load()
        rgb = im.convert("RGB")
        pixels = np.asarray(rgb, dtype=np.uint8)
    return Image(pixels=pixels, source_hash=hashlib.sha256(raw).hexdigest())


def save_png(image: Image, path: Path) -> None:
    """Write losslessly; identical pixels produce identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(image.pixels, mode="RGB").save(path, format="PNG")
