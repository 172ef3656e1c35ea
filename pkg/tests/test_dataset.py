"""Synthetic imagery generation, stratified splitting, container format."""

from __future__ import annotations

import dataclasses
import struct

import numpy as np
import pytest

from semcom.dataset import (
    BadMagicError,
    ClassCatalog,
    Dataset,
    DatasetSpec,
    DimensionOverflowError,
    TensorFileError,
    TruncatedFileError,
    generate_synthetic,
    load_tensor_file,
    nearest_centroid_accuracy,
    save_tensor_file,
    split,
    summary_csv,
)


def combined(splits):
    """Stack a SplitDatasets back into one Dataset (order: train, val, test)."""
    return Dataset(
        np.concatenate([splits.train.pixels, splits.val.pixels, splits.test.pixels]),
        np.concatenate([splits.train.labels, splits.val.labels, splits.test.labels]),
        np.concatenate(
            [splits.train.timestamps, splits.val.timestamps, splits.test.timestamps]
        ),
        splits.train.catalog,
    )


class TestGeneration:
    def test_counts_shapes_and_timestamps(self):
        spec = DatasetSpec(per_class_count=20, seed=1)
        t0, t1 = generate_synthetic(spec)
        n_classes = len(spec.catalog)
        for splits, stamp in ((t0, 0), (t1, 1)):
            total = combined(splits)
            assert total.pixels.shape == (20 * n_classes, 8, 8, 4)
            assert np.all(total.timestamps == stamp)
            counts = np.bincount(total.labels, minlength=n_classes)
            assert np.all(counts == 20)
        assert len(t0.train) == 14 * n_classes
        assert len(t0.val) == 3 * n_classes
        assert len(t0.test) == 3 * n_classes

    def test_generation_is_seed_deterministic(self):
        spec = DatasetSpec(per_class_count=5, seed=4)
        a, _ = generate_synthetic(spec)
        b, _ = generate_synthetic(spec)
        np.testing.assert_array_equal(a.train.pixels, b.train.pixels)
        c, _ = generate_synthetic(dataclasses.replace(spec, seed=5))
        assert not np.array_equal(a.train.pixels, c.train.pixels)

    def test_zero_drift_copies_are_identical(self):
        spec = DatasetSpec(per_class_count=5, temporal_drift=0.0, seed=2)
        t0, t1 = generate_synthetic(spec)
        np.testing.assert_array_equal(t0.train.pixels, t1.train.pixels)
        np.testing.assert_array_equal(t0.train.labels, t1.train.labels)

    def test_drift_shifts_each_class_by_one_fixed_pattern(self):
        spec = DatasetSpec(per_class_count=6, temporal_drift=1.5, seed=3)
        t0, t1 = generate_synthetic(spec)
        np.testing.assert_array_equal(t0.train.labels, t1.train.labels)
        diff = t1.train.pixels - t0.train.pixels
        for cls in np.unique(t0.train.labels):
            rows = diff[t0.train.labels == cls].reshape(-1, 8 * 8 * 4)
            assert np.linalg.norm(rows[0]) > 0
            # Pixels are rounded through float32 so files round-trip exactly;
            # the shared shift therefore matches only to f32 resolution.
            assert np.max(np.abs(rows - rows[0])) < 2e-6

    def test_drift_magnitude_scales_linearly(self):
        base = DatasetSpec(per_class_count=4, temporal_drift=1.0, seed=6)
        t0a, t1a = generate_synthetic(base)
        t0b, t1b = generate_synthetic(dataclasses.replace(base, temporal_drift=2.0))
        np.testing.assert_array_equal(t0a.train.pixels, t0b.train.pixels)
        np.testing.assert_allclose(
            t1b.train.pixels - t0b.train.pixels,
            2.0 * (t1a.train.pixels - t0a.train.pixels),
            atol=5e-6,
        )

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError):
            DatasetSpec(per_class_count=0)
        with pytest.raises(ValueError):
            DatasetSpec(temporal_drift=-0.5)
        with pytest.raises(ValueError):
            DatasetSpec(class_separation=0.0)


class TestSplit:
    def make_dataset(self, per_class=10, n_classes=3, seed=0):
        rng = np.random.default_rng(seed)
        n = per_class * n_classes
        return Dataset(
            rng.standard_normal((n, 2, 2, 1)),
            np.repeat(np.arange(n_classes), per_class),
            np.zeros(n, dtype=np.int64),
            ClassCatalog(tuple(f"c{i}" for i in range(n_classes))),
        )

    def test_exact_proportions_when_divisible(self):
        ds = self.make_dataset(per_class=20)
        sp = split(ds, (0.7, 0.15, 0.15), seed=1)
        for part, expected in ((sp.train, 14), (sp.val, 3), (sp.test, 3)):
            counts = np.bincount(part.labels, minlength=3)
            assert np.all(counts == expected)

    def test_within_one_of_proportions_otherwise(self):
        ds = self.make_dataset(per_class=13)
        sp = split(ds, (0.5, 0.3, 0.2), seed=1)
        for part, frac in ((sp.train, 0.5), (sp.val, 0.3), (sp.test, 0.2)):
            counts = np.bincount(part.labels, minlength=3)
            assert np.all(np.abs(counts - 13 * frac) <= 1)
        assert len(sp.train) + len(sp.val) + len(sp.test) == len(ds)

    def test_partition_is_disjoint_and_exhaustive(self):
        ds = self.make_dataset(per_class=11, seed=5)
        sp = split(ds, (0.6, 0.2, 0.2), seed=9)
        seen = np.concatenate(
            [p.pixels.reshape(len(p), -1).sum(axis=1) for p in (sp.train, sp.val, sp.test)]
        )
        original = ds.pixels.reshape(len(ds), -1).sum(axis=1)
        np.testing.assert_allclose(np.sort(seen), np.sort(original))

    def test_seed_determinism(self):
        ds = self.make_dataset()
        a = split(ds, (0.7, 0.15, 0.15), seed=3)
        b = split(ds, (0.7, 0.15, 0.15), seed=3)
        c = split(ds, (0.7, 0.15, 0.15), seed=4)
        np.testing.assert_array_equal(a.train.pixels, b.train.pixels)
        assert not np.array_equal(a.train.pixels, c.train.pixels)

    def test_bad_ratios_rejected(self):
        ds = self.make_dataset()
        with pytest.raises(ValueError):
            split(ds, (0.5, 0.5), seed=0)  # type: ignore[arg-type]
        with pytest.raises(ValueError):
            split(ds, (-0.1, 0.6, 0.5), seed=0)


class TestContainerFormat:
    def test_round_trip_is_exact(self, tmp_path):
        t0, _ = generate_synthetic(DatasetSpec(per_class_count=3, seed=7))
        path = str(tmp_path / "data.msit")
        save_tensor_file(path, t0.train)
        back = load_tensor_file(path)
        np.testing.assert_array_equal(back.pixels, t0.train.pixels)
        np.testing.assert_array_equal(back.labels, t0.train.labels)
        np.testing.assert_array_equal(back.timestamps, t0.train.timestamps)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.msit"
        path.write_bytes(b"JUNKxxxxxxxx")
        with pytest.raises(BadMagicError):
            load_tensor_file(str(path))

    def test_truncated_header_and_payload(self, tmp_path):
        t0, _ = generate_synthetic(DatasetSpec(per_class_count=2, seed=8))
        path = tmp_path / "cut.msit"
        save_tensor_file(str(path), t0.val)
        blob = path.read_bytes()
        path.write_bytes(blob[:6])
        with pytest.raises(TruncatedFileError):
            load_tensor_file(str(path))
        path.write_bytes(blob[: len(blob) - 5])
        with pytest.raises(TruncatedFileError):
            load_tensor_file(str(path))

    def test_unsupported_version(self, tmp_path):
        t0, _ = generate_synthetic(DatasetSpec(per_class_count=2, seed=8))
        path = tmp_path / "v9.msit"
        save_tensor_file(str(path), t0.val)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(blob))
        with pytest.raises(TensorFileError):
            load_tensor_file(str(path))

    def test_empty_container_rejected(self, tmp_path):
        path = tmp_path / "empty.msit"
        path.write_bytes(b"MSIT" + struct.pack("<II", 1, 0))
        with pytest.raises(TensorFileError):
            load_tensor_file(str(path))

    def test_dimension_overflow_on_save(self, tmp_path):
        ds = Dataset(
            np.zeros((1, 2, 2, 1)),
            np.array([70000]),
            np.zeros(1, dtype=np.int64),
            ClassCatalog(tuple(f"c{i}" for i in range(70001))),
        )
        with pytest.raises(DimensionOverflowError):
            save_tensor_file(str(tmp_path / "o.msit"), ds)


class TestSummaries:
    def test_summary_csv_counts(self):
        t0, _ = generate_synthetic(DatasetSpec(per_class_count=10, seed=1))
        lines = summary_csv(t0).strip().splitlines()
        assert lines[0] == "class,count_train,count_val,count_test"
        assert len(lines) == 1 + len(t0.train.catalog)
        first = lines[1].split(",")
        assert [int(x) for x in first[1:]] == [7, 2, 1] or sum(int(x) for x in first[1:]) == 10

    def test_nearest_centroid_separates_easy_classes(self):
        t0, _ = generate_synthetic(DatasetSpec(per_class_count=20, class_separation=3.0, seed=2))
        assert nearest_centroid_accuracy(t0.train, t0.test) >= 0.9

    def test_nearest_centroid_near_chance_when_unseparated(self):
        t0, _ = generate_synthetic(
            DatasetSpec(per_class_count=20, class_separation=1e-6, seed=3)
        )
        assert nearest_centroid_accuracy(t0.train, t0.test) <= 0.35
