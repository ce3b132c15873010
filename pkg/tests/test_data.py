"""Dataset loading, saving, and synthetic generation."""

import numpy as np
import pytest

from advrisk.data import (
    CIFAR_RECORD_BYTES,
    LabeledDataset,
    SyntheticSpec,
    generate_synthetic,
    load_cifar100_test,
    load_csv,
    save_csv,
)


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_two_rows_two_classes(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "label,x1,x2\na,0.0,1.0\nb,2.0,3.0\n")
        ds = load_csv(p)
        assert ds.n_points == 2 and ds.n_classes == 2 and ds.n_features == 2
        assert list(ds.labels) == [1, 2]
        assert ds.label_names == ("a", "b")

    def test_first_appearance_remap(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "label,x1\n3,0.5\n3,0.25\n7,0.75\n")
        ds = load_csv(p)
        assert ds.n_classes == 2
        assert list(ds.class_counts) == [2, 1]
        assert ds.label_names == ("3", "7")
        assert list(ds.labels) == [1, 1, 2]

    def test_ragged_row(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "label,x1,x2\na,0.0,1.0\nb,2.0\n")
        with pytest.raises(ValueError, match="ragged"):
            load_csv(p)

    def test_non_numeric(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "label,x1\na,zero\n")
        with pytest.raises(ValueError, match="non-numeric"):
            load_csv(p)

    def test_empty_file(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "")
        with pytest.raises(ValueError):
            load_csv(p)

    def test_header_only(self, tmp_path):
        p = write_csv(tmp_path / "d.csv", "label,x1\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_csv(p)

    def test_round_trip(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(n_classes=3, n_points=40, seed=5))
        p = tmp_path / "rt.csv"
        save_csv(ds, p)
        back = load_csv(p)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.label_names == ds.label_names

    def test_round_trip_string_labels(self, tmp_path):
        ds = LabeledDataset(
            np.array([[0.125, -3.5], [1e-17, 2.0], [4.0, 5.0]]),
            np.array([1, 2, 1]),
            ("cat", "dog"),
        )
        p = tmp_path / "rt.csv"
        save_csv(ds, p)
        back = load_csv(p)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.label_names == ("cat", "dog")


class TestDatasetInvariants:
    def test_counts_sum_to_n(self):
        ds = generate_synthetic(SyntheticSpec(seed=1))
        assert ds.class_counts.sum() == ds.n_points

    def test_label_range_validated(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((2, 1)), np.array([1, 3]), ("a", "b"))

    def test_immutable_features(self):
        ds = generate_synthetic(SyntheticSpec(n_classes=2, n_points=4, seed=0))
        with pytest.raises(ValueError):
            ds.features[0, 0] = 99.0


class TestCifarLoader:
    @staticmethod
    def make_blob(tmp_path, n_records=50, n_fine=10, seed=0):
        rng = np.random.default_rng(seed)
        rec = np.zeros((n_records, CIFAR_RECORD_BYTES), dtype=np.uint8)
        rec[:, 0] = rng.integers(0, 20, n_records)
        rec[:, 1] = np.arange(n_records) % n_fine
        rec[:, 2:] = rng.integers(0, 256, (n_records, 3072))
        p = tmp_path / "test.bin"
        rec.tofile(p)
        return p, rec

    def test_keep_subset(self, tmp_path):
        p, rec = self.make_blob(tmp_path, n_records=50, n_fine=10)
        ds = load_cifar100_test(p, 3)
        assert ds.n_points == 15  # 5 records per fine label, labels 0,1,2 kept
        assert ds.n_features == 3072
        assert ds.n_classes == 3
        kept = rec[rec[:, 1] < 3]
        np.testing.assert_allclose(ds.features, kept[:, 2:] / 255.0)
        np.testing.assert_array_equal(ds.labels, kept[:, 1].astype(int) + 1)

    def test_feature_scale(self, tmp_path):
        p, _ = self.make_blob(tmp_path)
        ds = load_cifar100_test(p, 10)
        assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0

    def test_truncated_file(self, tmp_path):
        p, _ = self.make_blob(tmp_path, n_records=5)
        raw = p.read_bytes()
        p.write_bytes(raw[:-10])
        with pytest.raises(ValueError, match="multiple"):
            load_cifar100_test(p, 10)

    def test_bad_class_count(self, tmp_path):
        p, _ = self.make_blob(tmp_path)
        with pytest.raises(ValueError):
            load_cifar100_test(p, 0)
        with pytest.raises(ValueError):
            load_cifar100_test(p, 101)


class TestSynthetic:
    def test_shapes_and_defaults(self):
        ds = generate_synthetic(SyntheticSpec(seed=42))
        assert ds.n_points == 1000 and ds.n_classes == 10 and ds.n_features == 2

    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(seed=9))
        b = generate_synthetic(SyntheticSpec(seed=9))
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_seed_changes_data(self):
        a = generate_synthetic(SyntheticSpec(seed=1))
        b = generate_synthetic(SyntheticSpec(seed=2))
        assert not np.array_equal(a.features, b.features)

    def test_class_sizes_random_but_near_uniform(self):
        ds = generate_synthetic(SyntheticSpec(seed=42))
        counts = ds.class_counts
        assert counts.min() >= 50 and counts.max() <= 160
        assert counts.min() != counts.max()

    def test_tiny_dataset_valid(self):
        ds = generate_synthetic(SyntheticSpec(n_classes=2, n_points=2, seed=0))
        assert ds.n_points == 2

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n_classes=1)
        with pytest.raises(ValueError):
            SyntheticSpec(n_classes=5, n_points=3)
        with pytest.raises(ValueError):
            SyntheticSpec(sigma=0.0)
