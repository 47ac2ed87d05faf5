"""conv2d / relu / maxpool2d against the naive loop oracles."""

from __future__ import annotations

import numpy as np
import pytest

from lastlayer.errors import ExtractorError
from lastlayer.nn import conv2d, maxpool2d, relu

from oracles import naive_conv2d, naive_maxpool2d


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-12)
    return float(np.max(np.abs(a - b) / denom))


class TestConv2d:
    def test_identity_kernel(self, rng):
        x = rng.standard_normal((5, 6, 1))
        k = np.ones((1, 1, 1, 1))
        assert np.allclose(conv2d(x, k), x)

    def test_hand_sum(self):
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(2, 2, 1)
        k = np.ones((1, 2, 2, 1))
        out = conv2d(x, k)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 10.0

    def test_strided_multichannel_vs_oracle(self, rng):
        x = rng.standard_normal((6, 6, 2))
        k = rng.standard_normal((3, 3, 3, 2))
        got = conv2d(x, k, stride=2)
        want = naive_conv2d(x, k, stride=2)
        assert got.shape == want.shape == (2, 2, 3)
        assert rel_error(got, want) <= 1e-6

    @pytest.mark.parametrize("padding", ["valid", "same"])
    def test_randomized_vs_oracle(self, rng, padding):
        for _ in range(30):
            h, w, cin = (int(rng.integers(2, 9)) for _ in range(3))
            kh = int(rng.integers(1, h + 1))
            kw = int(rng.integers(1, w + 1))
            kout = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            x = rng.standard_normal((h, w, cin))
            k = rng.standard_normal((kout, kh, kw, cin))
            got = conv2d(x, k, stride=stride, padding=padding)
            want = naive_conv2d(x, k, stride=stride, padding=padding)
            assert got.shape == want.shape
            assert rel_error(got, want) <= 1e-6

    def test_same_padding_keeps_dims_at_stride_one(self, rng):
        x = rng.standard_normal((7, 5, 3))
        k = rng.standard_normal((4, 3, 3, 3))
        assert conv2d(x, k, padding="same").shape == (7, 5, 4)

    def test_linearity(self, rng):
        x = rng.standard_normal((6, 6, 2))
        y = rng.standard_normal((6, 6, 2))
        k = rng.standard_normal((3, 3, 3, 2))
        a, b = 1.7, -0.3
        lhs = conv2d(a * x + b * y, k)
        rhs = a * conv2d(x, k) + b * conv2d(y, k)
        assert rel_error(lhs, rhs) <= 1e-6

    def test_depth_mismatch_fatal(self, rng):
        with pytest.raises(ExtractorError, match="depth"):
            conv2d(rng.standard_normal((4, 4, 2)), rng.standard_normal((1, 3, 3, 3)))


class TestRelu:
    def test_basic(self):
        assert relu(np.array([-1.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]

    def test_identity_on_nonnegative(self, rng):
        x = np.abs(rng.standard_normal((4, 5)))
        assert np.array_equal(relu(x), x)

    def test_idempotent(self, rng):
        for _ in range(10):
            x = rng.standard_normal((3, 4, 2))
            once = relu(x)
            assert np.array_equal(relu(once), once)

    def test_shape_preserved(self, rng):
        x = rng.standard_normal((2, 3, 4))
        assert relu(x).shape == x.shape


class TestMaxpool2d:
    def test_max_of_four(self):
        x = np.array([1.0, 5.0, 3.0, 2.0]).reshape(2, 2, 1)
        assert maxpool2d(x)[0, 0, 0] == 5.0

    def test_constant_halves_resolution(self):
        x = np.full((6, 8, 2), 3.5)
        out = maxpool2d(x)
        assert out.shape == (3, 4, 2)
        assert np.all(out == 3.5)

    def test_odd_trailing_dropped(self, rng):
        x = rng.standard_normal((7, 5, 1))
        assert maxpool2d(x).shape == (3, 2, 1)

    def test_randomized_vs_oracle_exact(self, rng):
        for _ in range(20):
            h, w = int(rng.integers(2, 9)), int(rng.integers(2, 9))
            c = int(rng.integers(1, 5))
            x = rng.standard_normal((h, w, c))
            assert np.array_equal(maxpool2d(x), naive_maxpool2d(x))
