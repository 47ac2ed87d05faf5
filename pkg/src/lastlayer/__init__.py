"""Batch transfer-learning pipeline toolkit.

Expands a directory-per-class image corpus with five geometric
augmentations, caches frozen bottleneck feature vectors, retrains a single
softmax layer with minibatch SGD, and evaluates with a confusion-matrix
metrics engine.
"""

from .augment import AugmentConfig, AugmentSpec, apply_transform, augment_dataset, resize
from .cache import BottleneckCache, import_bottlenecks, lookup_or_compute
from .dataset import (
    DatasetManifest,
    SampleRecord,
    SynthSpec,
    ingest,
    read_manifest,
    split,
    synth_generate,
    write_manifest,
)
from .extractor import ExtractorIdentity, ReferenceExtractor
from .image import Image, load_image, save_png
from .metrics import (
    ConfusionMatrix,
    build_confusion,
    class_metrics,
    macro_average,
    overall_accuracy,
)
from .nn import conv2d, maxpool2d, relu
from .trainer import (
    SoftmaxLayer,
    TrainingConfig,
    cross_entropy,
    forward,
    predict,
    sgd_step,
    softmax,
    train,
)

__version__ = "0.1.0"
