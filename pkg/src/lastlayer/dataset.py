"""Directory-per-class corpus ingestion, manifests, splits and synthetic data.

A manifest is the single source of truth flowing between stages: an ordered
class list plus one record per image file. Splits are assigned here and
never recomputed downstream.
"""

from __future__ import annotations

import colorsys
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path, PurePosixPath

import numpy as np

from .errors import DatasetError
from .image import Image, file_sha256, load_image, save_png

logger = logging.getLogger(__name__)

__all__ = [
    "VARIANTS",
    "SPLITS",
    "SampleRecord",
    "DatasetManifest",
    "IngestReport",
    "SynthSpec",
    "ingest",
    "split",
    "synth_generate",
    "write_manifest",
    "read_manifest",
]

VARIANT_ORIGINAL = "original"
VARIANTS = (
    VARIANT_ORIGINAL,
    "rot_minus30",
    "rot_plus30",
    "rot_plus90",
    "flip_h",
    "shear",
)
SPLITS = ("train", "validation", "test", "unassigned")

POLICY_BY_CORE = "by_core_image"
POLICY_AFTER_AUGMENT = "after_augment"
SPLIT_POLICIES = (POLICY_BY_CORE, POLICY_AFTER_AUGMENT)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class SampleRecord:
    path: str
    label: int
    core_id: str
    variant: str = VARIANT_ORIGINAL
    split: str = "unassigned"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise DatasetError(f"unknown variant {self.variant!r}")
        if self.split not in SPLITS:
            raise DatasetError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class DatasetManifest:
    classes: tuple[str, ...]
    records: tuple[SampleRecord, ...]
    split_policy: str = POLICY_BY_CORE

    def __post_init__(self) -> None:
        if len(set(self.classes)) != len(self.classes):
            raise DatasetError("class names must be unique")
        if self.split_policy not in SPLIT_POLICIES:
            raise DatasetError(f"unknown split policy {self.split_policy!r}")
        k = len(self.classes)
        seen_paths: set[str] = set()
        core_label: dict[str, int] = {}
        core_variant: set[tuple[str, str]] = set()
        for rec in self.records:
            if not 0 <= rec.label < k:
                raise DatasetError(f"label {rec.label} out of range for K={k}")
            if rec.path in seen_paths:
                raise DatasetError(f"duplicate path in manifest: {rec.path}")
            seen_paths.add(rec.path)
            prev = core_label.setdefault(rec.core_id, rec.label)
            if prev != rec.label:
                raise DatasetError(
                    f"core image {rec.core_id[:12]} appears under two labels "
                    f"({prev} and {rec.label})"
                )
            cv = (rec.core_id, rec.variant)
            if cv in core_variant:
                raise DatasetError(
                    f"duplicate (core_id, variant) pair: {rec.core_id[:12]}/{rec.variant}"
                )
            core_variant.add(cv)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def for_split(self, split: str) -> tuple[SampleRecord, ...]:
        return tuple(r for r in self.records if r.split == split)

    def class_counts(self, split: str | None = None) -> list[int]:
        counts = [0] * self.num_classes
        for rec in self.records:
            if split is None or rec.split == split:
                counts[rec.label] += 1
        return counts


@dataclass
class IngestReport:
    skipped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def skip_count(self) -> int:
        return len(self.skipped)


def ingest(root_dir: Path, report: IngestReport | None = None) -> DatasetManifest:
    """Scan ``root/<class_name>/<file>.{png,jpg,jpeg}`` into a manifest.

    Classes are the immediate subdirectories, sorted lexicographically so the
    label map is deterministic without any config. Undecodable files are
    skipped with a warning (collected in ``report`` when given); an empty
    root or a class that yields zero records is fatal.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset root does not exist: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DatasetError(f"no class subdirectories under {root}")

    classes = tuple(d.name for d in class_dirs)
    records: list[SampleRecord] = []
    for label, class_dir in enumerate(class_dirs):
        n_before = len(records)
        files = sorted(
            p for p in class_dir.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        for path in files:
            try:
                img = load_image(path)
            except Exception as exc:  # undecodable or unreadable
                logger.warning("skipping undecodable image %s: %s", path, exc)
                if report is not None:
                    report.skipped.append((str(path), str(exc)))
                continue
            records.append(
                SampleRecord(path=str(path), label=label, core_id=img.source_hash)
            )
        if len(records) == n_before:
            raise DatasetError(f"class {class_dir.name!r} has no decodable images")
    if report is not None and report.skip_count:
        logger.warning("ingest skipped %d undecodable file(s)", report.skip_count)
    return DatasetManifest(classes=classes, records=tuple(records))


def _split_units(manifest: DatasetManifest, policy: str) -> list[list[list[int]]]:
    """Per class: the indivisible units a split assigns, as record-index lists.

    Under by_core_image a unit is a whole core-image group (all variants move
    together, so no variant of one photo can leak across splits); under
    after_augment every record is its own unit.
    """
    per_class: list[dict[str, list[int]]] = [dict() for _ in manifest.classes]
    for idx, rec in enumerate(manifest.records):
        key = rec.core_id if policy == POLICY_BY_CORE else f"{rec.core_id}:{rec.variant}:{rec.path}"
        per_class[rec.label].setdefault(key, []).append(idx)
    # sort unit keys for order-independence of the seeded shuffle
    return [[group for _, group in sorted(units.items())] for units in per_class]


def split(
    manifest: DatasetManifest,
    test_per_class: int,
    val_fraction: float = 0.1,
    seed: int = 0,
    policy: str | None = None,
) -> DatasetManifest:
    """Assign every record to exactly one of train/validation/test.

    ``test_per_class`` counts core-image groups under the by_core_image
    policy and individual records under after_augment. Validation takes
    ``floor(val_fraction * remaining_units)`` per class from what is left
    after the test draw. Deterministic under (seed, policy) and independent
    of record order.
    """
    if policy is None:
        policy = manifest.split_policy
    if policy not in SPLIT_POLICIES:
        raise DatasetError(f"unknown split policy {policy!r}")
    if not 0 <= val_fraction < 1:
        raise DatasetError(f"val_fraction must be in [0, 1), got {val_fraction}")
    if test_per_class < 0:
        raise DatasetError(f"test_per_class must be >= 0, got {test_per_class}")

    units = _split_units(manifest, policy)
    shortfalls = {
        manifest.classes[label]: test_per_class - len(class_units)
        for label, class_units in enumerate(units)
        if len(class_units) < test_per_class
    }
    if shortfalls:
        detail = ", ".join(f"{name}: short {n}" for name, n in sorted(shortfalls.items()))
        raise DatasetError(f"not enough samples to satisfy test_per_class={test_per_class} ({detail})")

    assignment = ["train"] * len(manifest.records)
    for label, class_units in enumerate(units):
        rng = np.random.default_rng([seed, label])
        order = rng.permutation(len(class_units))
        n_test = test_per_class
        n_val = int(val_fraction * (len(class_units) - n_test))
        for rank, unit_idx in enumerate(order):
            if rank < n_test:
                tag = "test"
            elif rank < n_test + n_val:
                tag = "validation"
            else:
                tag = "train"
            for rec_idx in class_units[unit_idx]:
                assignment[rec_idx] = tag

    new_records = tuple(
        replace(rec, split=assignment[i]) for i, rec in enumerate(manifest.records)
    )
    result = DatasetManifest(classes=manifest.classes, records=new_records, split_policy=policy)
    for name, n_train, n_val, n_test in zip(
        manifest.classes,
        result.class_counts("train"),
        result.class_counts("validation"),
        result.class_counts("test"),
    ):
        logger.info("split %s: train=%d validation=%d test=%d", name, n_train, n_val, n_test)
    return result


@dataclass(frozen=True)
class SynthSpec:
    classes: int = 5
    core_per_class: int = 30
    width: int = 240
    height: int = 180

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise DatasetError(f"synthetic corpus needs K >= 2 classes, got {self.classes}")
        if self.core_per_class < 1:
            raise DatasetError(f"core_per_class must be >= 1, got {self.core_per_class}")
        if self.width < 1 or self.height < 1:
            raise DatasetError(f"invalid synth resolution {self.width}x{self.height}")


def _synth_pixels(spec: SynthSpec, label: int, index: int, seed: int) -> np.ndarray:
    """Class-separable pattern: per-class base hue + oriented wave + noise.

    Mean RGB stays near the class base color, so a nearest-centroid classifier
    on mean RGB separates the classes by construction.
    """
    rng = np.random.default_rng([seed, label, index])
    hue = label / spec.classes
    base = 255.0 * np.array(colorsys.hsv_to_rgb(hue, 0.6, 0.75))
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    angle = np.pi * label / spec.classes
    freq = 2.0 * np.pi * (3 + label) / max(spec.height, spec.width)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wave = np.sin(freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)
    noise = rng.normal(0.0, 10.0, size=(spec.height, spec.width, 3))
    px = base[None, None, :] + 28.0 * wave[:, :, None] + noise
    return np.clip(np.rint(px), 0, 255).astype(np.uint8)


def synth_generate(spec: SynthSpec, seed: int, out_dir: Path) -> DatasetManifest:
    """Write a deterministic synthetic corpus and return its manifest.

    Layout matches ingest expectations (``out_dir/class_XX/core_XXXX.png``),
    so re-ingesting the directory reproduces the same (path, label) set.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create synth output dir {out}: {exc}") from exc

    records: list[SampleRecord] = []
    classes = tuple(f"class_{k:02d}" for k in range(spec.classes))
    for label, name in enumerate(classes):
        for index in range(spec.core_per_class):
            path = out / name / f"core_{index:04d}.png"
            pixels = _synth_pixels(spec, label, index, seed)
            try:
                save_png(Image(pixels=pixels), path)
            except OSError as exc:
                raise DatasetError(f"cannot write synthetic image {path}: {exc}") from exc
            records.append(
                SampleRecord(path=str(path), label=label, core_id=file_sha256(path))
            )
    return DatasetManifest(classes=classes, records=tuple(records))


MANIFEST_HEADER = ("path", "label", "class_name", "core_id", "variant", "split")


def write_manifest(manifest: DatasetManifest, path: Path, relative_to: Path | None = None) -> None:
    """Write the line-oriented TSV form (lossless, posix path separators)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["\t".join(MANIFEST_HEADER)]
    base = Path(relative_to).resolve() if relative_to is not None else None
    for rec in manifest.records:
        rec_path = Path(rec.path)
        if base is not None:
            try:
                rec_path = rec_path.resolve().relative_to(base)
            except ValueError:
                pass  # outside the base dir: keep as-is
        lines.append(
            "\t".join(
                (
                    str(PurePosixPath(rec_path)),
                    str(rec.label),
                    manifest.classes[rec.label],
                    rec.core_id,
                    rec.variant,
                    rec.split,
                )
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: Path, resolve: bool = True) -> DatasetManifest:
    """Read a manifest TSV. Relative record paths resolve against the file's dir."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split("\t")) != MANIFEST_HEADER:
        raise DatasetError(f"bad manifest header in {path}")

    class_by_label: dict[int, str] = {}
    raw: list[tuple[str, int, str, str, str]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != len(MANIFEST_HEADER):
            raise DatasetError(f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} fields")
        rec_path, label_s, class_name, core_id, variant, split_tag = parts
        label = int(label_s)
        known = class_by_label.setdefault(label, class_name)
        if known != class_name:
            raise DatasetError(f"{path}:{lineno}: label {label} maps to both {known!r} and {class_name!r}")
        raw.append((rec_path, label, core_id, variant, split_tag))

    if not class_by_label:
        raise DatasetError(f"manifest has no records: {path}")
    k = max(class_by_label) + 1
    missing = [i for i in range(k) if i not in class_by_label]
    if missing:
        raise DatasetError(f"manifest is missing class names for labels {missing}")
    classes = tuple(class_by_label[i] for i in range(k))

    records = []
    for rec_path, label, core_id, variant, split_tag in raw:
        p = Path(rec_path)
        if resolve and not p.is_absolute():
            p = path.parent / p
        records.append(
            SampleRecord(path=str(p), label=label, core_id=core_id, variant=variant, split=split_tag)
        )
    return DatasetManifest(classes=classes, records=tuple(records))
