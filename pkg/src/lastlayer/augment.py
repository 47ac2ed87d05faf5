"""Geometric augmentations and the fixed resize.

Five deterministic transforms expand every core image into six training
variants. Interpolation is bilinear everywhere resampling occurs. The two
90-degree-free transforms (flip_h, rot_plus90) are exact array moves with
no resampling loss.

Boundary policy: a geometric transform writes each output pixel either as a
pure bilinear combination of in-bounds source pixels or as the fill color
(no blended border). Resize clamps sample coordinates to the source rect
instead, so a constant image resizes to the same constant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import VARIANT_ORIGINAL, DatasetManifest, SampleRecord
from .errors import AugmentError
from .image import Image, load_image, save_png

logger = logging.getLogger(__name__)

__all__ = [
    "TRANSFORMS",
    "AugmentSpec",
    "AugmentConfig",
    "apply_transform",
    "resize",
    "augment_dataset",
]

TRANSFORMS = ("rot_minus30", "rot_plus30", "rot_plus90", "flip_h", "shear")


@dataclass(frozen=True)
class AugmentSpec:
    transform: str
    shear_factor: float = 0.2
    fill: tuple[int, int, int] = (0, 0, 0)
    interpolation: str = "bilinear"

    def __post_init__(self) -> None:
        if self.transform not in TRANSFORMS:
            raise AugmentError(f"unknown transform {self.transform!r}")
        if not math.isfinite(self.shear_factor) or abs(self.shear_factor) >= 2:
            raise AugmentError(f"shear_factor out of range: {self.shear_factor}")
        if self.interpolation != "bilinear":
            raise AugmentError(f"unsupported interpolation {self.interpolation!r}")
        if len(self.fill) != 3 or any(not 0 <= v <= 255 for v in self.fill):
            raise AugmentError(f"fill must be an RGB byte triple, got {self.fill!r}")


def _affine_matrix(spec: AugmentSpec) -> np.ndarray:
    """Forward 2x2 map on (x, y) pixel coordinates, y pointing down.

    Positive rotation angles turn the displayed image counterclockwise;
    shear maps (x, y) -> (x + shear_factor * y, y).
    """
    if spec.transform == "shear":
        return np.array([[1.0, spec.shear_factor], [0.0, 1.0]])
    angle = {"rot_minus30": -30.0, "rot_plus30": 30.0}[spec.transform]
    t = math.radians(angle)
    return np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])


def _output_geometry(width: int, height: int, matrix: np.ndarray) -> tuple[int, int, float, float]:
    """Canvas size covering the transformed source rect, plus the offset that
    centers the transformed content on it."""
    corners = np.array(
        [[0.0, 0.0], [width, 0.0], [0.0, height], [width, height]]
    ) - np.array([width / 2.0, height / 2.0])
    moved = corners @ matrix.T
    vmin = moved.min(axis=0)
    vmax = moved.max(axis=0)
    out_w = int(math.ceil(vmax[0] - vmin[0] - 1e-9))
    out_h = int(math.ceil(vmax[1] - vmin[1] - 1e-9))
    offset_x = out_w / 2.0 - (vmin[0] + vmax[0]) / 2.0
    offset_y = out_h / 2.0 - (vmin[1] + vmax[1]) / 2.0
    return out_w, out_h, offset_x, offset_y


def _affine_resample(pixels: np.ndarray, matrix: np.ndarray, fill: tuple[int, int, int]) -> np.ndarray:
    h, w = pixels.shape[:2]
    out_w, out_h, off_x, off_y = _output_geometry(w, h, matrix)
    inv = np.linalg.inv(matrix)

    ys, xs = np.mgrid[0:out_h, 0:out_w]
    qx = xs + 0.5 - off_x
    qy = ys + 0.5 - off_y
    # back to source pixel-index space (pixel i has its center at i + 0.5)
    sx = inv[0, 0] * qx + inv[0, 1] * qy + w / 2.0 - 0.5
    sy = inv[1, 0] * qx + inv[1, 1] * qy + h / 2.0 - 0.5

    valid = (sx >= 0.0) & (sx <= w - 1.0) & (sy >= 0.0) & (sy <= h - 1.0)
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)

    src = pixels.astype(np.float64)
    value = (
        src[y0, x0] * ((1 - fx) * (1 - fy))[..., None]
        + src[y0, x1] * (fx * (1 - fy))[..., None]
        + src[y1, x0] * ((1 - fx) * fy)[..., None]
        + src[y1, x1] * (fx * fy)[..., None]
    )
    out = np.where(valid[..., None], value, np.array(fill, dtype=np.float64))
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def apply_transform(img: Image, spec: AugmentSpec) -> Image:
    """Apply one geometric transform; the canvas grows to keep all content."""
    if spec.transform == "flip_h":
        return Image(pixels=np.ascontiguousarray(img.pixels[:, ::-1, :]))
    if spec.transform == "rot_plus90":
        # lossless quarter turn, counterclockwise on screen; swaps width/height
        return Image(pixels=np.ascontiguousarray(np.rot90(img.pixels, k=1, axes=(0, 1))))
    return Image(pixels=_affine_resample(img.pixels, _affine_matrix(spec), spec.fill))


def resize(img: Image, target_w: int, target_h: int) -> Image:
    """Bilinear stretch to exactly (target_w, target_h); aspect not preserved."""
    if target_w < 1 or target_h < 1:
        raise AugmentError(f"invalid resize target {target_w}x{target_h}")
    h, w = img.pixels.shape[:2]
    sx = np.clip((np.arange(target_w) + 0.5) * (w / target_w) - 0.5, 0.0, w - 1.0)
    sy = np.clip((np.arange(target_h) + 0.5) * (h / target_h) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0

    src = img.pixels.astype(np.float64)
    wx0 = (1 - fx)[None, :, None]
    wx1 = fx[None, :, None]
    wy0 = (1 - fy)[:, None, None]
    wy1 = fy[:, None, None]
    value = (
        src[y0[:, None], x0[None, :]] * (wy0 * wx0)
        + src[y0[:, None], x1[None, :]] * (wy0 * wx1)
        + src[y1[:, None], x0[None, :]] * (wy1 * wx0)
        + src[y1[:, None], x1[None, :]] * (wy1 * wx1)
    )
    return Image(pixels=np.clip(np.floor(value + 0.5), 0, 255).astype(np.uint8))


@dataclass(frozen=True)
class AugmentConfig:
    transforms: tuple[str, ...] = TRANSFORMS
    shear_factor: float = 0.2
    fill: tuple[int, int, int] = (0, 0, 0)
    target_width: int = 200
    target_height: int = 150

    def __post_init__(self) -> None:
        if len(set(self.transforms)) != len(self.transforms):
            raise AugmentError("duplicate transforms in augment config")
        for name in self.transforms:
            if name not in TRANSFORMS:
                raise AugmentError(f"unknown transform {name!r}")
        if self.target_width < 1 or self.target_height < 1:
            raise AugmentError(
                f"invalid target resolution {self.target_width}x{self.target_height}"
            )

    def spec_for(self, transform: str) -> AugmentSpec:
        return AugmentSpec(transform=transform, shear_factor=self.shear_factor, fill=self.fill)


def augment_dataset(
    manifest: DatasetManifest, config: AugmentConfig, out_dir: Path
) -> DatasetManifest:
    """Expand every core image into 1 + len(transforms) resized variants.

    Output records inherit label, core_id and split from their source record
    and point at freshly written PNGs under ``out_dir/<class_name>/``. A
    write failure removes everything this call already wrote.
    """
    for rec in manifest.records:
        if rec.variant != VARIANT_ORIGINAL:
            raise AugmentError(
                f"augment_dataset expects original records only, found {rec.variant!r} ({rec.path})"
            )
    out = Path(out_dir)
    written: list[Path] = []
    records: list[SampleRecord] = []
    try:
        for rec in manifest.records:
            img = load_image(Path(rec.path))
            class_name = manifest.classes[rec.label]
            for variant in (VARIANT_ORIGINAL, *config.transforms):
                if variant == VARIANT_ORIGINAL:
                    transformed = img
                else:
                    transformed = apply_transform(img, config.spec_for(variant))
                final = resize(transformed, config.target_width, config.target_height)
                path = out / class_name / f"{rec.core_id[:16]}_{variant}.png"
                save_png(final, path)
                written.append(path)
                records.append(replace(rec, path=str(path), variant=variant))
    except OSError as exc:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise AugmentError(f"augmentation write failed, partial output removed: {exc}") from exc
    logger.info(
        "augmented %d core images into %d records", len(manifest.records), len(records)
    )
    return DatasetManifest(
        classes=manifest.classes, records=tuple(records), split_policy=manifest.split_policy
    )
