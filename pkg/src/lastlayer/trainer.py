"""Final-layer softmax training on cached feature vectors.

The only trainable object is one K x D weight matrix plus K biases,
initialized to zero (the problem is convex, so zero init is safe and makes
runs reproducible). Plain minibatch SGD on mean cross-entropy; each step
draws ``batch_size`` samples uniformly without replacement, independently
across steps. All math in float64; feature storage stays float32 at the
cache boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TrainingError

__all__ = [
    "SoftmaxLayer",
    "TrainingConfig",
    "TrainingCurvePoint",
    "softmax",
    "cross_entropy",
    "forward",
    "predict",
    "accuracy",
    "sgd_step",
    "train",
    "save_layer",
    "load_layer",
    "write_curve_csv",
    "read_curve_csv",
]

PROB_FLOOR = 1e-12

LAYER_MAGIC = b"SFTM"
LAYER_VERSION = 1
_LAYER_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class SoftmaxLayer:
    weights: np.ndarray  # K x D
    biases: np.ndarray  # K

    def __post_init__(self) -> None:
        w, b = self.weights, self.biases
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise TrainingError(f"inconsistent layer shapes: W{w.shape}, b{b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise TrainingError("layer parameters must be finite")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, num_classes: int, dim: int) -> "SoftmaxLayer":
        if num_classes < 1 or dim < 1:
            raise TrainingError(f"invalid layer size K={num_classes}, D={dim}")
        return cls(weights=np.zeros((num_classes, dim)), biases=np.zeros(num_classes))


@dataclass(frozen=True)
class TrainingConfig:
    steps: int = 4000
    batch_size: int = 10
    learning_rate: float = 0.01
    seed: int = 0
    val_fraction: float = 0.1
    eval_interval: int = 10

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise TrainingError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise TrainingError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 <= self.val_fraction < 1:
            raise TrainingError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.eval_interval < 1:
            raise TrainingError(f"eval_interval must be >= 1, got {self.eval_interval}")


@dataclass(frozen=True)
class TrainingCurvePoint:
    step: int
    train_accuracy: float
    validation_accuracy: float
    cross_entropy: float


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction, so huge logits cannot overflow."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, true_label: int) -> float:
    p = np.asarray(probs, dtype=np.float64)
    if not 0 <= true_label < p.shape[-1]:
        raise TrainingError(f"label {true_label} out of range for K={p.shape[-1]}")
    return float(-np.log(max(p[true_label], PROB_FLOOR)))


def forward(layer: SoftmaxLayer, x: np.ndarray) -> np.ndarray:
    """Logits z = W @ x + b for one vector or a batch (rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.dim:
        raise TrainingError(f"feature dim {x.shape[-1]} does not match layer dim {layer.dim}")
    return x @ layer.weights.T + layer.biases


def predict(layer: SoftmaxLayer, x: np.ndarray) -> int | np.ndarray:
    """Argmax class id(s); ties break toward the lowest id."""
    logits = forward(layer, x)
    if logits.ndim == 1:
        return int(np.argmax(logits))
    return np.argmax(logits, axis=-1)


def accuracy(layer: SoftmaxLayer, x: np.ndarray, y: np.ndarray) -> float:
    if len(y) == 0:
        return 0.0
    return float(np.mean(predict(layer, x) == np.asarray(y)))


def _batch_loss_and_grad(
    layer: SoftmaxLayer, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    probs = softmax(forward(layer, x))
    n = x.shape[0]
    picked = probs[np.arange(n), y]
    loss = float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))
    delta = probs  # dL/dz = p - onehot(y), averaged over the batch
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grad_w = delta.T @ x
    grad_b = delta.sum(axis=0)
    return loss, grad_w, grad_b


def sgd_step(
    layer: SoftmaxLayer, batch_x: np.ndarray, batch_y: np.ndarray, lr: float
) -> tuple[SoftmaxLayer, float]:
    """One SGD update on the mean cross-entropy of the batch.

    Returns the updated layer and the pre-update batch mean loss.
    """
    x = np.asarray(batch_x, dtype=np.float64)
    y = np.asarray(batch_y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise TrainingError(f"batch must be a nonempty N x D array, got shape {x.shape}")
    if x.shape[1] != layer.dim:
        raise TrainingError(f"feature dim {x.shape[1]} does not match layer dim {layer.dim}")
    if y.shape != (x.shape[0],) or y.min() < 0 or y.max() >= layer.num_classes:
        raise TrainingError("batch labels out of range or wrong shape")

    loss, grad_w, grad_b = _batch_loss_and_grad(layer, x, y)
    if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
        raise TrainingError("non-finite gradient (corrupted features?)")
    updated = SoftmaxLayer(
        weights=layer.weights - lr * grad_w, biases=layer.biases - lr * grad_b
    )
    return updated, loss


def train(
    config: TrainingConfig,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    num_classes: int | None = None,
) -> tuple[SoftmaxLayer, list[TrainingCurvePoint]]:
    """Run the SGD loop from zero init; returns the layer and the curve.

    A curve point is recorded at every step divisible by ``eval_interval``:
    accuracies are measured after that step's update (train accuracy on the
    step's own batch, validation accuracy on the full validation set) and
    cross-entropy is the pre-update batch mean loss. Deterministic under
    (config, data order).
    """
    x, y = np.asarray(train_set[0], dtype=np.float64), np.asarray(train_set[1], dtype=np.int64)
    xv, yv = np.asarray(val_set[0], dtype=np.float64), np.asarray(val_set[1], dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise TrainingError("train set must be a nonempty N x D array")
    if config.batch_size > x.shape[0]:
        raise TrainingError(
            f"batch_size {config.batch_size} exceeds train set size {x.shape[0]}"
        )
    k = int(num_classes) if num_classes is not None else int(y.max()) + 1
    layer = SoftmaxLayer.zeros(k, x.shape[1])

    rng = np.random.default_rng(config.seed)
    curve: list[TrainingCurvePoint] = []
    for step in range(1, config.steps + 1):
        idx = rng.choice(x.shape[0], size=config.batch_size, replace=False)
        layer, loss = sgd_step(layer, x[idx], y[idx], config.learning_rate)
        if step % config.eval_interval == 0:
            curve.append(
                TrainingCurvePoint(
                    step=step,
                    train_accuracy=accuracy(layer, x[idx], y[idx]),
                    validation_accuracy=accuracy(layer, xv, yv),
                    cross_entropy=loss,
                )
            )
    return layer, curve


def save_layer(layer: SoftmaxLayer, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    k, d = layer.weights.shape
    with open(path, "wb") as fh:
        fh.write(_LAYER_HEADER.pack(LAYER_MAGIC, LAYER_VERSION, k, d))
        fh.write(layer.weights.astype("<f8").tobytes())
        fh.write(layer.biases.astype("<f8").tobytes())


def load_layer(path: Path) -> SoftmaxLayer:
    path = Path(path)
    if not path.is_file():
        raise TrainingError(f"layer file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _LAYER_HEADER.size:
        raise TrainingError(f"layer file shorter than header: {path}")
    magic, version, k, d = _LAYER_HEADER.unpack_from(blob, 0)
    if magic != LAYER_MAGIC or version != LAYER_VERSION:
        raise TrainingError(f"not a layer file (or unsupported version): {path}")
    expected = _LAYER_HEADER.size + 8 * (k * d + k)
    if len(blob) != expected:
        raise TrainingError(f"layer file has {len(blob)} bytes, expected {expected}: {path}")
    weights = np.frombuffer(blob, dtype="<f8", count=k * d, offset=_LAYER_HEADER.size)
    biases = np.frombuffer(blob, dtype="<f8", count=k, offset=_LAYER_HEADER.size + 8 * k * d)
    return SoftmaxLayer(weights=weights.reshape(k, d).copy(), biases=biases.copy())


CURVE_HEADER = "step,train_accuracy,validation_accuracy,cross_entropy"


def write_curve_csv(curve: list[TrainingCurvePoint], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [CURVE_HEADER]
    for p in curve:
        lines.append(
            f"{p.step},{p.train_accuracy!r},{p.validation_accuracy!r},{p.cross_entropy!r}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_curve_csv(path: Path) -> list[TrainingCurvePoint]:
    path = Path(path)
    if not path.is_file():
        raise TrainingError(f"curve file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CURVE_HEADER:
        raise TrainingError(f"bad curve header in {path}")
    points = []
    for line in lines[1:]:
        if not line:
            continue
        step, tr, va, ce = line.split(",")
        points.append(TrainingCurvePoint(int(step), float(tr), float(va), float(ce)))
    return points
