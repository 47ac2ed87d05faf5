"""Stage orchestration: wire the modules together over an output directory.

Each stage is individually runnable and idempotent given unchanged inputs;
artifacts live at fixed names under the configured output directory. Stage
order: source (synth or ingest) -> augment (+split) -> extract -> train ->
evaluate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import augment as augment_mod
from . import dataset as dataset_mod
from . import metrics as metrics_mod
from . import trainer as trainer_mod
from .cache import BottleneckCache, cache_key, import_bottlenecks, lookup_or_compute, store_dim
from .config import SEED_STAGE_SPLIT, SEED_STAGE_SYNTH, PipelineConfig
from .errors import CacheError, MetricsError, MissingArtifactError, TrainingError
from .extractor import ReferenceExtractor
from .image import file_sha256, load_image

logger = logging.getLogger(__name__)

__all__ = [
    "ArtifactPaths",
    "ExtractStats",
    "stage_source",
    "stage_ingest",
    "stage_synth",
    "stage_augment",
    "stage_extract",
    "stage_train",
    "stage_evaluate",
    "evaluate_predictions",
    "emit_report",
    "run_pipeline",
]


@dataclass(frozen=True)
class ArtifactPaths:
    out_dir: Path

    @property
    def synth_dir(self) -> Path:
        return self.out_dir / "synth"

    @property
    def manifest(self) -> Path:
        return self.out_dir / "manifest.tsv"

    @property
    def augmented_dir(self) -> Path:
        return self.out_dir / "augmented"

    @property
    def manifest_augmented(self) -> Path:
        return self.out_dir / "manifest_augmented.tsv"

    @property
    def cache(self) -> Path:
        return self.out_dir / "bottlenecks.bnkf"

    @property
    def layer(self) -> Path:
        return self.out_dir / "layer.sftm"

    @property
    def curves(self) -> Path:
        return self.out_dir / "curves.csv"

    @property
    def confusion(self) -> Path:
        return self.out_dir / "confusion.csv"

    def report_txt(self, naming: str) -> Path:
        return self.out_dir / f"report_{naming}.txt"

    def report_csv(self, naming: str) -> Path:
        return self.out_dir / f"report_{naming}.csv"

    @property
    def summary(self) -> Path:
        return self.out_dir / "summary.txt"


def _paths(cfg: PipelineConfig) -> ArtifactPaths:
    assert cfg.out_dir is not None
    return ArtifactPaths(out_dir=Path(cfg.out_dir))


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(
            f"missing artifact {path}; run the {produced_by} stage first"
        )
    return path


def stage_ingest(cfg: PipelineConfig) -> dataset_mod.DatasetManifest:
    paths = _paths(cfg)
    report = dataset_mod.IngestReport()
    manifest = dataset_mod.ingest(Path(cfg.dataset_root), report=report)
    dataset_mod.write_manifest(manifest, paths.manifest, relative_to=paths.out_dir)
    logger.info(
        "ingested %d records in %d classes (%d skipped)",
        len(manifest.records), manifest.num_classes, report.skip_count,
    )
    return manifest


def stage_synth(cfg: PipelineConfig) -> dataset_mod.DatasetManifest:
    paths = _paths(cfg)
    manifest = dataset_mod.synth_generate(
        cfg.synth, cfg.seed_for(SEED_STAGE_SYNTH), paths.synth_dir
    )
    dataset_mod.write_manifest(manifest, paths.manifest, relative_to=paths.out_dir)
    return manifest


def stage_source(cfg: PipelineConfig) -> dataset_mod.DatasetManifest:
    if cfg.source == "synth":
        return stage_synth(cfg)
    return stage_ingest(cfg)


def stage_augment(cfg: PipelineConfig) -> dataset_mod.DatasetManifest:
    paths = _paths(cfg)
    manifest = dataset_mod.read_manifest(_require(paths.manifest, "ingest/synth"))
    augmented = augment_mod.augment_dataset(manifest, cfg.augment, paths.augmented_dir)
    assigned = dataset_mod.split(
        augmented,
        test_per_class=cfg.test_per_class,
        val_fraction=cfg.training.val_fraction,
        seed=cfg.seed_for(SEED_STAGE_SPLIT),
        policy=cfg.split_policy,
    )
    dataset_mod.write_manifest(assigned, paths.manifest_augmented, relative_to=paths.out_dir)
    return assigned


@dataclass(frozen=True)
class ExtractStats:
    computed: int
    cache_hits: int
    entries: int


def _reference_extractor(cfg: PipelineConfig) -> ReferenceExtractor:
    return ReferenceExtractor(
        input_width=cfg.augment.target_width,
        input_height=cfg.augment.target_height,
        dim=cfg.extractor_dim,
        seed=cfg.extractor_seed,
    )


def _cache_digest(cfg: PipelineConfig, cache: BottleneckCache) -> str:
    """The extractor digest train/evaluate should look features up under."""
    if cfg.extractor_kind == "reference":
        return _reference_extractor(cfg).identity.weights_digest
    digests = {key.partition(":")[2] for key in cache.keys()}
    if len(digests) != 1:
        raise CacheError(
            f"cache {cache.path} holds {len(digests)} extractor digests, expected exactly 1"
        )
    return next(iter(digests))


def stage_extract(cfg: PipelineConfig) -> ExtractStats:
    paths = _paths(cfg)
    manifest = dataset_mod.read_manifest(_require(paths.manifest_augmented, "augment"))
    if cfg.extractor_kind == "import":
        dim = store_dim(Path(cfg.import_path))
        cache = BottleneckCache(paths.cache, dim=dim)
        result = import_bottlenecks(Path(cfg.import_path), manifest, cache)
        digest = _cache_digest(cfg, cache)
        missing = [
            rec.path
            for rec in manifest.records
            if cache_key(file_sha256(Path(rec.path)), digest) not in cache
        ]
        if missing:
            raise CacheError(
                f"imported bottlenecks cover {len(manifest.records) - len(missing)} of "
                f"{len(manifest.records)} manifest images; first missing: {missing[0]}"
            )
        logger.info("imported %d bottleneck entries (dim %d)", result.inserted, dim)
        return ExtractStats(computed=0, cache_hits=0, entries=len(cache))

    extractor = _reference_extractor(cfg)
    cache = BottleneckCache(paths.cache, dim=extractor.dim)
    for rec in manifest.records:
        img = load_image(Path(rec.path))
        lookup_or_compute(cache, img, extractor)
    logger.info(
        "extract: %d computed, %d cache hits, %d entries",
        extractor.invocations, cache.hits, len(cache),
    )
    return ExtractStats(
        computed=extractor.invocations, cache_hits=cache.hits, entries=len(cache)
    )


def _features_for(
    records, cache: BottleneckCache, digest: str
) -> tuple[np.ndarray, np.ndarray]:
    vectors = []
    labels = []
    for rec in records:
        key = cache_key(file_sha256(Path(rec.path)), digest)
        vec = cache.get(key)
        if vec is None:
            raise MissingArtifactError(
                f"missing artifact: bottleneck for {rec.path} not in cache; "
                "run the extract stage first"
            )
        vectors.append(vec)
        labels.append(rec.label)
    if not vectors:
        return np.zeros((0, cache.dim)), np.zeros((0,), dtype=np.int64)
    return np.stack(vectors).astype(np.float64), np.asarray(labels, dtype=np.int64)


def stage_train(cfg: PipelineConfig) -> tuple[trainer_mod.SoftmaxLayer, list]:
    paths = _paths(cfg)
    manifest = dataset_mod.read_manifest(_require(paths.manifest_augmented, "augment"))
    _require(paths.cache, "extract")
    cache = BottleneckCache(paths.cache)
    digest = _cache_digest(cfg, cache)

    train_x, train_y = _features_for(manifest.for_split("train"), cache, digest)
    val_x, val_y = _features_for(manifest.for_split("validation"), cache, digest)
    if train_x.shape[0] == 0:
        raise TrainingError("manifest has no train records (was split run?)")

    layer, curve = trainer_mod.train(
        cfg.training, (train_x, train_y), (val_x, val_y), num_classes=manifest.num_classes
    )
    trainer_mod.save_layer(layer, paths.layer)
    trainer_mod.write_curve_csv(curve, paths.curves)
    logger.info("trained %d steps; %d curve points", cfg.training.steps, len(curve))
    return layer, curve


def stage_evaluate(cfg: PipelineConfig) -> str:
    paths = _paths(cfg)
    manifest = dataset_mod.read_manifest(_require(paths.manifest_augmented, "augment"))
    _require(paths.cache, "extract")
    layer = trainer_mod.load_layer(_require(paths.layer, "train"))
    cache = BottleneckCache(paths.cache)
    digest = _cache_digest(cfg, cache)

    test_records = manifest.for_split("test")
    if not test_records:
        raise MetricsError("manifest has no test records (was split run?)")
    test_x, test_y = _features_for(test_records, cache, digest)
    if layer.num_classes != manifest.num_classes:
        raise TrainingError(
            f"layer has {layer.num_classes} classes, manifest has {manifest.num_classes}"
        )
    predictions = trainer_mod.predict(layer, test_x)
    cm = metrics_mod.build_confusion(
        test_y.tolist(), list(map(int, predictions)), manifest.num_classes, manifest.classes
    )
    curve = (
        trainer_mod.read_curve_csv(paths.curves) if paths.curves.is_file() else []
    )
    return _write_evaluation(paths, cm, curve)


def evaluate_predictions(predictions_file: Path, out_dir: Path) -> str:
    """Standalone evaluation of a ``path<TAB>truth<TAB>prediction`` file."""
    predictions_file = Path(predictions_file)
    if not predictions_file.is_file():
        raise MissingArtifactError(f"missing artifact {predictions_file}")
    truths: list[str] = []
    preds: list[str] = []
    lines = predictions_file.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise MetricsError(
                f"{predictions_file}:{lineno}: expected path<TAB>truth<TAB>prediction"
            )
        truths.append(parts[1])
        preds.append(parts[2])
    if not truths:
        raise MetricsError(f"no prediction rows in {predictions_file}")

    names = set(truths) | set(preds)
    if all(n.lstrip("-").isdigit() for n in names):
        classes = tuple(sorted(names, key=int))
    else:
        classes = tuple(sorted(names))
    index = {name: i for i, name in enumerate(classes)}
    cm = metrics_mod.build_confusion(
        [index[t] for t in truths], [index[p] for p in preds], len(classes), classes
    )
    paths = ArtifactPaths(out_dir=Path(out_dir))
    paths.out_dir.mkdir(parents=True, exist_ok=True)
    return _write_evaluation(paths, cm, curve=[])


def _write_evaluation(paths: ArtifactPaths, cm, curve) -> str:
    paths.confusion.write_text(metrics_mod.render_confusion_csv(cm), encoding="utf-8")
    for naming in metrics_mod.NAMING_MODES:
        report = metrics_mod.class_metrics(cm, naming_mode=naming)
        paths.report_txt(naming).write_text(
            metrics_mod.render_report_text(cm, report), encoding="utf-8"
        )
        paths.report_csv(naming).write_text(
            metrics_mod.render_report_csv(report), encoding="utf-8"
        )
    summary = emit_report(paths, cm, curve)
    paths.summary.write_text(summary, encoding="utf-8")
    return summary


def _pct(value: Fraction) -> str:
    return f"{float(metrics_mod.truncate_pct(value)):.2f}%"


def emit_report(paths: ArtifactPaths, cm, curve) -> str:
    """Human-readable run summary; file pointers are relative to out_dir."""
    lines = ["run summary", "==========="]
    lines.append(f"classes: {cm.num_classes}")
    lines.append(f"test samples: {cm.total}")
    acc = metrics_mod.overall_accuracy(cm)
    lines.append(f"overall accuracy: {_pct(acc)}")
    if curve:
        final = curve[-1]
        lines.append(f"final cross-entropy: {final.cross_entropy!r} (step {final.step})")
        lines.append(f"curve: {len(curve)} points ({paths.curves.name})")
    else:
        lines.append("curve: empty")
    for naming in metrics_mod.NAMING_MODES:
        report = metrics_mod.class_metrics(cm, naming_mode=naming)
        macro = metrics_mod.macro_average(report)
        swap = naming == metrics_mod.NAMING_SWAPPED
        macro_p = macro.recall_pct if swap else macro.precision_pct
        macro_r = macro.precision_pct if swap else macro.recall_pct
        lines.append("")
        lines.append(f"per-class metrics, {naming} naming ({paths.report_csv(naming).name}):")
        lines.append(f"  {'class':<17} {'precision':>10} {'recall':>10} {'f_measure':>10}")
        for m in report.per_class:
            _, p_pct = report.under_label(m, "precision")
            _, r_pct = report.under_label(m, "recall")
            lines.append(
                f"  {m.name:<17} {float(p_pct):>9.2f}% "
                f"{float(r_pct):>9.2f}% {float(m.f_measure_pct):>9.2f}%"
            )
        lines.append(
            f"  {'macro (truncated)':<17} {float(macro_p):>9.3f}% "
            f"{float(macro_r):>9.3f}% {float(macro.f_measure_pct):>9.3f}%"
        )
    lines.append("")
    lines.append(
        "files: " + ", ".join(
            [paths.confusion.name]
            + [paths.report_csv(n).name for n in metrics_mod.NAMING_MODES]
            + [paths.report_txt(n).name for n in metrics_mod.NAMING_MODES]
        )
    )
    return "\n".join(lines) + "\n"


def run_pipeline(cfg: PipelineConfig) -> str:
    stage_source(cfg)
    stage_augment(cfg)
    stage_extract(cfg)
    stage_train(cfg)
    return stage_evaluate(cfg)
