"""Exception types shared across the pipeline stages."""


class PipelineError(Exception):
    """Base class for anything the pipeline can raise on purpose."""


class DatasetError(PipelineError):
    """Corpus layout, manifest or split problems."""


class AugmentError(PipelineError):
    """Transform or augmentation output failures."""


class ExtractorError(PipelineError):
    """Feature extraction misconfiguration (resolution, dim mismatch)."""


class CacheError(PipelineError):
    """Bottleneck store corruption or contract violations."""


class TrainingError(PipelineError):
    """Trainer misuse (bad batch size, non-finite gradients, dim mismatch)."""


class MetricsError(PipelineError):
    """Invalid confusion-matrix inputs."""


class ConfigError(PipelineError):
    """Config file or override validation failures."""


class MissingArtifactError(PipelineError):
    """A stage dependency (manifest, cache, layer...) is not on disk yet."""
