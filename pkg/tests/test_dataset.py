"""Ingest, split and synthetic-corpus behavior."""

from __future__ import annotations

import numpy as np
import pytest

from lastlayer.dataset import (
    DatasetManifest,
    IngestReport,
    SampleRecord,
    SynthSpec,
    ingest,
    read_manifest,
    split,
    synth_generate,
    write_manifest,
)
from lastlayer.errors import DatasetError
from lastlayer.image import save_png

from conftest import make_corpus, random_image
from oracles import mean_rgb_centroid_accuracy


def fabricate_manifest(classes=5, cores_per_class=120, variants_per_core=6):
    """Records without files on disk; split never touches the filesystem."""
    variant_names = ("original", "rot_minus30", "rot_plus30", "rot_plus90", "flip_h", "shear")
    records = []
    for label in range(classes):
        for core in range(cores_per_class):
            core_id = f"{label:02d}{core:06d}" + "0" * 56
            for v in range(variants_per_core):
                records.append(
                    SampleRecord(
                        path=f"mem/{label}/{core}/{variant_names[v]}.png",
                        label=label,
                        core_id=core_id,
                        variant=variant_names[v],
                    )
                )
    return DatasetManifest(
        classes=tuple(f"c{i}" for i in range(classes)), records=tuple(records)
    )


class TestIngest:
    def test_paper_scale_counts(self, tmp_path, rng):
        root = make_corpus(tmp_path / "five", [f"game_{i}" for i in range(5)], 120, rng, 8, 6)
        manifest = ingest(root)
        assert manifest.num_classes == 5
        assert len(manifest.records) == 600
        assert manifest.class_counts() == [120] * 5

    def test_single_class_single_image(self, tmp_path, rng):
        root = make_corpus(tmp_path / "one", ["solo"], 1, rng)
        manifest = ingest(root)
        assert manifest.classes == ("solo",)
        assert len(manifest.records) == 1
        rec = manifest.records[0]
        assert rec.variant == "original" and rec.split == "unassigned"
        assert len(rec.core_id) == 64

    def test_corrupt_jpeg_skipped(self, tmp_path, rng, caplog):
        root = make_corpus(tmp_path / "corrupt", ["stuff"], 9, rng)
        # a truncated JPEG: valid SOI marker then an abrupt end
        good = random_image(rng)
        from PIL import Image as PILImage

        full = tmp_path / "full.jpg"
        PILImage.fromarray(good.pixels).save(full, format="JPEG")
        (root / "stuff" / "broken.jpg").write_bytes(full.read_bytes()[:40])

        report = IngestReport()
        with caplog.at_level("WARNING"):
            manifest = ingest(root, report=report)
        assert len(manifest.records) == 9
        assert report.skip_count == 1
        assert "broken.jpg" in report.skipped[0][0]
        assert any("skipping undecodable" in r.message for r in caplog.records)

    def test_empty_root_fatal(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(DatasetError, match="no class subdirectories"):
            ingest(tmp_path / "empty")

    def test_class_without_images_fatal(self, tmp_path, rng):
        root = make_corpus(tmp_path / "gap", ["full"], 2, rng)
        (root / "hollow").mkdir()
        with pytest.raises(DatasetError, match="hollow"):
            ingest(root)

    def test_classes_sorted_lexicographically(self, tmp_path, rng):
        root = make_corpus(tmp_path / "order", ["zebra", "apple", "mango"], 1, rng)
        assert ingest(root).classes == ("apple", "mango", "zebra")

    def test_label_permutation_equivariance(self, tmp_path, rng):
        root = make_corpus(tmp_path / "before", ["aa", "bb"], 3, rng)
        before = ingest(root)
        (root / "aa").rename(root / "zz")  # now sorts last
        after = ingest(root)
        assert before.classes == ("aa", "bb")
        assert after.classes == ("bb", "zz")
        assert sorted(before.class_counts()) == sorted(after.class_counts())

    def test_duplicate_image_across_classes_fatal(self, tmp_path, rng):
        root = tmp_path / "dup"
        img = random_image(rng)
        save_png(img, root / "x" / "a.png")
        save_png(img, root / "y" / "b.png")
        with pytest.raises(DatasetError, match="two labels"):
            ingest(root)


class TestSplit:
    def test_paper_protocol_counts(self):
        manifest = fabricate_manifest(classes=5, cores_per_class=120)
        assert len(manifest.records) == 3600
        out = split(manifest, test_per_class=120, val_fraction=0.0, seed=9, policy="after_augment")
        assert len(out.for_split("test")) == 600
        assert len(out.for_split("train")) == 3000
        assert out.class_counts("test") == [120] * 5

    def test_deterministic_under_seed(self):
        manifest = fabricate_manifest(classes=3, cores_per_class=10)
        a = split(manifest, test_per_class=2, val_fraction=0.1, seed=77)
        b = split(manifest, test_per_class=2, val_fraction=0.1, seed=77)
        assert [r.split for r in a.records] == [r.split for r in b.records]
        c = split(manifest, test_per_class=2, val_fraction=0.1, seed=78)
        assert [r.split for r in a.records] != [r.split for r in c.records]

    def test_partition(self):
        manifest = fabricate_manifest(classes=2, cores_per_class=8)
        out = split(manifest, test_per_class=2, val_fraction=0.25, seed=5)
        tags = [r.split for r in out.records]
        assert set(tags) <= {"train", "validation", "test"}
        assert len(out.for_split("train")) + len(out.for_split("validation")) + len(
            out.for_split("test")
        ) == len(manifest.records)

    def test_no_core_leakage_exhaustive(self):
        manifest = fabricate_manifest(classes=3, cores_per_class=12)
        out = split(manifest, test_per_class=3, val_fraction=0.2, seed=123, policy="by_core_image")
        split_of = {}
        leaks = 0
        for rec in out.records:
            prev = split_of.setdefault(rec.core_id, rec.split)
            if prev != rec.split:
                leaks += 1
        assert leaks == 0
        # sanity: test got whole core groups (3 cores x 6 variants per class)
        assert len(out.for_split("test")) == 3 * 6 * 3

    def test_after_augment_counts_records_not_cores(self):
        manifest = fabricate_manifest(classes=2, cores_per_class=4)  # 24 records/class
        out = split(manifest, test_per_class=10, val_fraction=0.0, seed=3, policy="after_augment")
        assert out.class_counts("test") == [10, 10]

    def test_insufficient_samples_lists_shortfall(self):
        manifest = fabricate_manifest(classes=2, cores_per_class=4)
        with pytest.raises(DatasetError, match="short"):
            split(manifest, test_per_class=5, val_fraction=0.0, seed=1, policy="by_core_image")


class TestSynth:
    def test_file_and_class_counts(self, tmp_path):
        spec = SynthSpec(classes=5, core_per_class=30, width=32, height=24)
        manifest = synth_generate(spec, seed=11, out_dir=tmp_path / "synth")
        assert manifest.num_classes == 5
        assert len(manifest.records) == 150
        assert sum(1 for _ in (tmp_path / "synth").rglob("*.png")) == 150

    def test_deterministic_bytes(self, tmp_path):
        spec = SynthSpec(classes=2, core_per_class=3, width=20, height=16)
        a = synth_generate(spec, seed=5, out_dir=tmp_path / "a")
        b = synth_generate(spec, seed=5, out_dir=tmp_path / "b")
        for ra, rb in zip(a.records, b.records):
            pa, pb = open(ra.path, "rb").read(), open(rb.path, "rb").read()
            assert pa == pb

    def test_centroid_separability(self, tmp_path):
        spec = SynthSpec(classes=5, core_per_class=8, width=40, height=30)
        manifest = synth_generate(spec, seed=21, out_dir=tmp_path / "sep")
        from lastlayer.image import load_image

        by_class = [[] for _ in range(5)]
        for rec in manifest.records:
            by_class[rec.label].append(load_image(rec.path).pixels.astype(np.float64))
        assert mean_rgb_centroid_accuracy(by_class) > 0.95

    def test_reingest_reproduces_path_label_set(self, tmp_path):
        spec = SynthSpec(classes=3, core_per_class=4, width=20, height=16)
        manifest = synth_generate(spec, seed=2, out_dir=tmp_path / "round")
        again = ingest(tmp_path / "round")
        assert {(r.path, r.label) for r in manifest.records} == {
            (r.path, r.label) for r in again.records
        }
        # core ids agree too: both hash the file bytes
        assert {r.core_id for r in manifest.records} == {r.core_id for r in again.records}

    def test_rejects_degenerate_specs(self):
        with pytest.raises(DatasetError):
            SynthSpec(classes=1, core_per_class=3)
        with pytest.raises(DatasetError):
            SynthSpec(classes=2, core_per_class=0)


class TestManifestFile:
    def test_round_trip_lossless(self, tmp_path, rng):
        root = make_corpus(tmp_path / "rt", ["p", "q"], 3, rng)
        manifest = split(ingest(root), test_per_class=1, val_fraction=0.0, seed=4)
        out = tmp_path / "manifest.tsv"
        write_manifest(manifest, out)
        again = read_manifest(out)
        assert again.classes == manifest.classes
        assert again.records == manifest.records

    def test_relative_paths_resolve_against_manifest_dir(self, tmp_path):
        spec = SynthSpec(classes=2, core_per_class=2, width=20, height=16)
        manifest = synth_generate(spec, seed=8, out_dir=tmp_path / "data")
        out = tmp_path / "manifest.tsv"
        write_manifest(manifest, out, relative_to=tmp_path)
        text = out.read_text()
        assert str(tmp_path) not in text.split("\n", 1)[1]  # body holds relative paths
        again = read_manifest(out)
        assert {r.path for r in again.records} == {r.path for r in manifest.records}

    def test_header_validation(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("nope\tnope\n")
        with pytest.raises(DatasetError, match="header"):
            read_manifest(bad)
