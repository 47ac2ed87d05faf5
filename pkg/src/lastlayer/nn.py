"""Forward-pass numeric kernels: cross-correlation, ReLU, max pooling.

Inputs are H x W x C arrays; kernels are stacked as K_out x k_h x k_w x C.
These are the frozen-extractor building blocks; nothing here is trainable.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ExtractorError

__all__ = ["conv2d", "relu", "maxpool2d"]


def conv2d(
    x: np.ndarray, kernels: np.ndarray, stride: int = 1, padding: str = "valid"
) -> np.ndarray:
    """Standard cross-correlation.

    Output spatial dims are floor((size_padded - k) / stride) + 1; "same"
    zero-pads so that stride-1 output matches the input spatial dims
    (asymmetric pad goes after, like the usual ceil-mode convention).
    """
    if x.ndim != 3:
        raise ExtractorError(f"conv2d input must be HxWxC, got shape {x.shape}")
    if kernels.ndim != 4:
        raise ExtractorError(f"kernels must be KxKhxKwxC, got shape {kernels.shape}")
    if kernels.shape[3] != x.shape[2]:
        raise ExtractorError(
            f"kernel depth {kernels.shape[3]} does not match input channels {x.shape[2]}"
        )
    if stride < 1:
        raise ExtractorError(f"stride must be >= 1, got {stride}")
    if padding not in ("valid", "same"):
        raise ExtractorError(f"unknown padding {padding!r}")

    k_h, k_w = kernels.shape[1], kernels.shape[2]
    if padding == "same":
        pads = []
        for size, k in ((x.shape[0], k_h), (x.shape[1], k_w)):
            out = -(-size // stride)  # ceil
            total = max((out - 1) * stride + k - size, 0)
            pads.append((total // 2, total - total // 2))
        x = np.pad(x, (pads[0], pads[1], (0, 0)))
    if k_h > x.shape[0] or k_w > x.shape[1]:
        raise ExtractorError(
            f"kernel {k_h}x{k_w} larger than (padded) input {x.shape[0]}x{x.shape[1]}"
        )

    windows = sliding_window_view(x, (k_h, k_w), axis=(0, 1))[::stride, ::stride]
    # windows: H' x W' x C x k_h x k_w; contract (k_h, k_w, C) against kernels
    return np.tensordot(windows, kernels, axes=([3, 4, 2], [1, 2, 3]))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def maxpool2d(x: np.ndarray) -> np.ndarray:
    """Per-channel max over non-overlapping 2x2 windows; odd trailing
    row/column is dropped."""
    if x.ndim != 3:
        raise ExtractorError(f"maxpool2d input must be HxWxC, got shape {x.shape}")
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    if h2 < 1 or w2 < 1:
        raise ExtractorError(f"maxpool2d needs H, W >= 2, got {x.shape[0]}x{x.shape[1]}")
    trimmed = x[: h2 * 2, : w2 * 2]
    return trimmed.reshape(h2, 2, w2, 2, x.shape[2]).max(axis=(1, 3))
