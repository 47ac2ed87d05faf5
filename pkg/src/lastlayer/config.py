"""Declarative pipeline configuration.

Flat ``key = value`` file with section headers (configparser syntax).
Defaults reproduce the reference protocol: test_per_class=120, 4000 steps,
batch 10, lr 0.01, 200x150 targets, the five standard transforms.

One seed drives everything: stages with randomness derive their stream as
``seed XOR stage index`` (synth=1, split=2, train=3), so each stage is
independently reproducible. The reference extractor keeps its own seed
(default 42) because its weights define a frozen identity that should not
change when experiments reseed.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .augment import TRANSFORMS, AugmentConfig
from .dataset import SPLIT_POLICIES, SynthSpec
from .errors import ConfigError
from .trainer import TrainingConfig

__all__ = ["PipelineConfig", "load_config", "SEED_STAGE_SYNTH", "SEED_STAGE_SPLIT", "SEED_STAGE_TRAIN"]

SEED_STAGE_SYNTH = 1
SEED_STAGE_SPLIT = 2
SEED_STAGE_TRAIN = 3

_SOURCES = ("synth", "directory")
_EXTRACTOR_KINDS = ("reference", "import")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    out_dir: Path | None = None
    source: str = "synth"
    dataset_root: Path | None = None
    synth: SynthSpec = field(default_factory=SynthSpec)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    split_policy: str = "by_core_image"
    test_per_class: int = 120
    extractor_kind: str = "reference"
    extractor_seed: int = 42
    extractor_dim: int = 128
    import_path: Path | None = None
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def seed_for(self, stage_index: int) -> int:
        return self.seed ^ stage_index

    def validate(self) -> None:
        """Check cross-field consistency and that referenced paths resolve."""
        if self.out_dir is None:
            raise ConfigError("no output directory (set pipeline.out_dir or pass --out)")
        if self.source not in _SOURCES:
            raise ConfigError(f"dataset.source must be one of {_SOURCES}, got {self.source!r}")
        if self.source == "directory":
            if self.dataset_root is None:
                raise ConfigError("dataset.source = directory requires dataset.root")
            if not Path(self.dataset_root).is_dir():
                raise ConfigError(f"dataset.root does not exist: {self.dataset_root}")
        if self.split_policy not in SPLIT_POLICIES:
            raise ConfigError(
                f"split.policy must be one of {SPLIT_POLICIES}, got {self.split_policy!r}"
            )
        if self.test_per_class < 0:
            raise ConfigError(f"split.test_per_class must be >= 0, got {self.test_per_class}")
        if self.extractor_kind not in _EXTRACTOR_KINDS:
            raise ConfigError(
                f"extractor.kind must be one of {_EXTRACTOR_KINDS}, got {self.extractor_kind!r}"
            )
        if self.extractor_kind == "import":
            if self.import_path is None:
                raise ConfigError("extractor.kind = import requires extractor.import_path")
            if not Path(self.import_path).is_file():
                raise ConfigError(f"extractor.import_path does not exist: {self.import_path}")


_KNOWN_KEYS = {
    "pipeline": {"seed", "out_dir"},
    "dataset": {"source", "root"},
    "synth": {"classes", "core_per_class", "width", "height"},
    "augment": {"transforms", "shear_factor", "fill", "target_width", "target_height"},
    "split": {"policy", "test_per_class"},
    "extractor": {"kind", "seed", "dim", "import_path"},
    "training": {"steps", "batch_size", "learning_rate", "val_fraction", "eval_interval"},
}


def _parse_int(section: str, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: expected integer, got {value!r}") from exc


def _parse_float(section: str, key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: expected number, got {value!r}") from exc


def _parse_fill(value: str) -> tuple[int, int, int]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        raise ConfigError(f"augment.fill: expected R,G,B bytes, got {value!r}")
    fill = tuple(int(p) for p in parts)
    if any(v > 255 for v in fill):
        raise ConfigError(f"augment.fill: components must be <= 255, got {value!r}")
    return fill  # type: ignore[return-value]


def _parse_transforms(value: str) -> tuple[str, ...]:
    names = tuple(p.strip() for p in value.split(",") if p.strip())
    for n in names:
        if n not in TRANSFORMS:
            raise ConfigError(f"augment.transforms: unknown transform {n!r}")
    return names


def load_config(
    path: Path | None = None,
    overrides: list[str] | None = None,
    seed: int | None = None,
    out_dir: Path | None = None,
) -> PipelineConfig:
    """Build a config from an optional file plus ``section.key=value`` overrides.

    ``--seed`` and ``--out`` style arguments win over both file and --set.
    """
    values: dict[tuple[str, str], str] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        for section in parser.sections():
            for key, value in parser.items(section):
                values[(section, key)] = value
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, _, value = item.partition("=")
        if "." not in dotted:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        section, _, key = dotted.strip().partition(".")
        values[(section, key.strip())] = value.strip()

    for section, key in values:
        if section not in _KNOWN_KEYS or key not in _KNOWN_KEYS[section]:
            raise ConfigError(f"unknown config key {section}.{key}")

    def get(section: str, key: str, default: str | None = None) -> str | None:
        return values.get((section, key), default)

    cfg = PipelineConfig()
    cfg = replace(
        cfg,
        seed=_parse_int("pipeline", "seed", get("pipeline", "seed", str(cfg.seed))),
        out_dir=Path(v) if (v := get("pipeline", "out_dir")) else None,
        source=get("dataset", "source", cfg.source),
        dataset_root=Path(v) if (v := get("dataset", "root")) else None,
        synth=SynthSpec(
            classes=_parse_int("synth", "classes", get("synth", "classes", "5")),
            core_per_class=_parse_int(
                "synth", "core_per_class", get("synth", "core_per_class", "30")
            ),
            width=_parse_int("synth", "width", get("synth", "width", "240")),
            height=_parse_int("synth", "height", get("synth", "height", "180")),
        ),
        augment=AugmentConfig(
            transforms=_parse_transforms(get("augment", "transforms", ",".join(TRANSFORMS))),
            shear_factor=_parse_float(
                "augment", "shear_factor", get("augment", "shear_factor", "0.2")
            ),
            fill=_parse_fill(get("augment", "fill", "0,0,0")),
            target_width=_parse_int(
                "augment", "target_width", get("augment", "target_width", "200")
            ),
            target_height=_parse_int(
                "augment", "target_height", get("augment", "target_height", "150")
            ),
        ),
        split_policy=get("split", "policy", cfg.split_policy),
        test_per_class=_parse_int(
            "split", "test_per_class", get("split", "test_per_class", str(cfg.test_per_class))
        ),
        extractor_kind=get("extractor", "kind", cfg.extractor_kind),
        extractor_seed=_parse_int("extractor", "seed", get("extractor", "seed", "42")),
        extractor_dim=_parse_int("extractor", "dim", get("extractor", "dim", "128")),
        import_path=Path(v) if (v := get("extractor", "import_path")) else None,
        training=TrainingConfig(
            steps=_parse_int("training", "steps", get("training", "steps", "4000")),
            batch_size=_parse_int("training", "batch_size", get("training", "batch_size", "10")),
            learning_rate=_parse_float(
                "training", "learning_rate", get("training", "learning_rate", "0.01")
            ),
            seed=0,  # rebound below from the pipeline seed
            val_fraction=_parse_float(
                "training", "val_fraction", get("training", "val_fraction", "0.1")
            ),
            eval_interval=_parse_int(
                "training", "eval_interval", get("training", "eval_interval", "10")
            ),
        ),
    )
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=Path(out_dir))
    cfg = replace(cfg, training=replace(cfg.training, seed=cfg.seed_for(SEED_STAGE_TRAIN)))
    return cfg
