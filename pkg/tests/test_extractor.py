"""Reference extractor determinism, separability and the bottleneck cache."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from lastlayer.cache import (
    BottleneckCache,
    cache_key,
    import_bottlenecks,
    lookup_or_compute,
    store_dim,
)
from lastlayer.dataset import DatasetManifest, SampleRecord, SynthSpec, _synth_pixels
from lastlayer.errors import CacheError, ExtractorError
from lastlayer.extractor import ReferenceExtractor
from lastlayer.image import Image

from conftest import random_image

EXT_KW = dict(input_width=24, input_height=16, dim=32)


def small_extractor(seed=42) -> ReferenceExtractor:
    return ReferenceExtractor(seed=seed, **EXT_KW)


class TestReferenceExtractor:
    def test_deterministic(self, rng):
        img = random_image(rng, 24, 16)
        a = small_extractor().extract(img)
        b = small_extractor().extract(img)
        assert np.array_equal(a, b)
        assert a.dtype == np.float32 and a.shape == (32,)

    def test_all_black_maps_to_zero_projection(self):
        ext = small_extractor()
        black1 = Image(pixels=np.zeros((16, 24, 3), dtype=np.uint8))
        black2 = Image(pixels=np.zeros((16, 24, 3), dtype=np.uint8))
        v1, v2 = ext.extract(black1), ext.extract(black2)
        assert np.array_equal(v1, v2)
        assert np.all(v1 == 0.0)  # no bias terms anywhere

    def test_resolution_mismatch_fatal(self, rng):
        with pytest.raises(ExtractorError, match="extractor expects"):
            small_extractor().extract(random_image(rng, 25, 16))

    def test_identity_depends_on_seed(self):
        a, b = small_extractor(seed=1), small_extractor(seed=2)
        assert a.identity.weights_digest != b.identity.weights_digest
        assert small_extractor(seed=1).identity == a.identity

    def test_order_independence(self, rng):
        imgs = [random_image(rng, 24, 16) for _ in range(4)]
        ext = small_extractor()
        forward = [ext.extract(im) for im in imgs]
        backward = [small_extractor().extract(im) for im in reversed(imgs)]
        for f, b in zip(forward, reversed(backward)):
            assert np.array_equal(f, b)

    def test_inter_class_distance_exceeds_intra(self):
        spec = SynthSpec(classes=3, core_per_class=10, width=24, height=16)
        ext = small_extractor()
        feats, labels = [], []
        for label in range(3):
            for i in range(10):
                px = _synth_pixels(spec, label, i, seed=99)
                feats.append(ext.extract(Image(pixels=px)))
                labels.append(label)
        feats = np.array(feats)
        intra, inter = [], []
        for i in range(len(feats)):
            for j in range(i + 1, len(feats)):
                d = float(np.linalg.norm(feats[i] - feats[j]))
                (intra if labels[i] == labels[j] else inter).append(d)
        assert np.mean(inter) > np.mean(intra)


class TestCache:
    def test_miss_then_hit_counts(self, tmp_path, rng):
        ext = small_extractor()
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=ext.dim)
        imgs = [random_image(rng, 24, 16) for _ in range(5)]
        first = [lookup_or_compute(cache, im, ext) for im in imgs]
        assert ext.invocations == 5 and cache.misses == 5 and cache.hits == 0
        second = [lookup_or_compute(cache, im, ext) for im in imgs]
        assert ext.invocations == 5  # no recompute on the second pass
        assert cache.hits == 5
        for a, b in zip(first, second):
            assert np.array_equal(a, b)

    def test_round_trip_bit_exact(self, tmp_path, rng):
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=7)
        vec = rng.standard_normal(7).astype(np.float32)
        cache.put("k:1", vec)
        reopened = BottleneckCache(tmp_path / "c.bnkf")
        got = reopened.get("k:1")
        assert got.tobytes() == vec.tobytes()

    def test_distinct_extractors_do_not_share_entries(self, tmp_path, rng):
        ext_a, ext_b = small_extractor(seed=1), small_extractor(seed=2)
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=ext_a.dim)
        imgs = [random_image(rng, 24, 16) for _ in range(4)]
        for im in imgs:
            lookup_or_compute(cache, im, ext_a)
        for im in imgs:
            lookup_or_compute(cache, im, ext_b)
        assert ext_b.invocations == 4  # B recomputed everything
        assert len(cache) == 8

    def test_keys_are_write_once(self, tmp_path):
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=2)
        cache.put("a:b", np.zeros(2, dtype=np.float32))
        with pytest.raises(CacheError, match="immutable"):
            cache.put("a:b", np.ones(2, dtype=np.float32))

    def test_bad_magic_fatal_with_rebuild_hint(self, tmp_path):
        path = tmp_path / "c.bnkf"
        path.write_bytes(b"JUNKXXXXXXXXXXXXXXXX")
        with pytest.raises(CacheError, match="rebuild"):
            BottleneckCache(path)

    def test_truncation_fatal(self, tmp_path):
        path = tmp_path / "c.bnkf"
        cache = BottleneckCache(path, dim=4)
        cache.put("x:y", np.arange(4, dtype=np.float32))
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(CacheError, match="rebuild"):
            BottleneckCache(path)

    def test_dim_mismatch_on_open(self, tmp_path):
        BottleneckCache(tmp_path / "c.bnkf", dim=4)
        with pytest.raises(CacheError, match="dim"):
            BottleneckCache(tmp_path / "c.bnkf", dim=8)


def write_store(path, dim, records):
    """Hand-rolled store writer for import tests."""
    blob = b"BNKF" + struct.pack("<III", 1, dim, len(records))
    for key, vec in records:
        kb = key.encode()
        blob += struct.pack("<H", len(kb)) + kb + np.asarray(vec, dtype="<f4").tobytes()
    path.write_bytes(blob)
    return path


def manifest_for_hashes(hashes):
    """Original-variant records whose core_id doubles as the file hash."""
    records = tuple(
        SampleRecord(path=f"mem/{i}.png", label=0, core_id=h) for i, h in enumerate(hashes)
    )
    return DatasetManifest(classes=("only",), records=records)


class TestImport:
    def test_import_inception_width_file(self, tmp_path, rng):
        dim = 2048
        hashes = [f"{i:064x}" for i in range(600)]
        records = [
            (cache_key(h, "e" * 64), rng.standard_normal(dim).astype(np.float32))
            for h in hashes
        ]
        store = write_store(tmp_path / "ext.bnkf", dim, records)
        assert store_dim(store) == 2048
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=dim)
        result = import_bottlenecks(store, manifest_for_hashes(hashes), cache)
        assert result.inserted == 600
        assert len(cache) == 600
        assert cache.dim == 2048

    def test_empty_file_succeeds(self, tmp_path):
        store = write_store(tmp_path / "ext.bnkf", 16, [])
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=16)
        result = import_bottlenecks(store, manifest_for_hashes(["a" * 64]), cache)
        assert result.inserted == 0
        assert len(cache) == 0

    def test_record_dim_disagreeing_with_header_fatal_before_insert(self, tmp_path, rng):
        dim = 8
        good = (cache_key("a" * 64, "e" * 64), rng.standard_normal(dim).astype(np.float32))
        short = (cache_key("b" * 64, "e" * 64), rng.standard_normal(dim - 3).astype(np.float32))
        # write the short record by hand so its payload is 5 floats, not 8
        blob = b"BNKF" + struct.pack("<III", 1, dim, 2)
        for key, vec in (good, short):
            kb = key.encode()
            blob += struct.pack("<H", len(kb)) + kb + vec.tobytes()
        store = tmp_path / "bad.bnkf"
        store.write_bytes(blob)
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=dim)
        with pytest.raises(CacheError, match="malformed"):
            import_bottlenecks(store, manifest_for_hashes(["a" * 64, "b" * 64]), cache)
        assert len(cache) == 0  # nothing inserted

    def test_unknown_image_skipped_with_warning(self, tmp_path, rng, caplog):
        dim = 4
        known = "a" * 64
        stranger = "f" * 64
        store = write_store(
            tmp_path / "ext.bnkf",
            dim,
            [
                (cache_key(known, "e" * 64), np.ones(dim, dtype=np.float32)),
                (cache_key(stranger, "e" * 64), np.zeros(dim, dtype=np.float32)),
            ],
        )
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=dim)
        with caplog.at_level("WARNING"):
            result = import_bottlenecks(store, manifest_for_hashes([known]), cache)
        assert result.inserted == 1
        assert len(result.skipped_unknown) == 1
        assert any("unknown image reference" in r.message for r in caplog.records)

    def test_dim_conflict_with_cache_fatal(self, tmp_path):
        store = write_store(tmp_path / "ext.bnkf", 16, [])
        cache = BottleneckCache(tmp_path / "c.bnkf", dim=8)
        with pytest.raises(CacheError, match="dim"):
            import_bottlenecks(store, manifest_for_hashes(["a" * 64]), cache)
