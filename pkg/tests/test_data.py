import numpy as np
import pytest

from neglearn.data import (
    DataConfigError,
    IDXFormatError,
    LabeledDataset,
    load_idx,
    make_blobs,
    read_csv,
    read_idx_labels,
    split,
    write_csv,
    write_idx,
)


class TestBlobs:
    def test_well_separated_is_nearly_linearly_trivial(self):
        ds = make_blobs(5, 400, 8, 10.0, np.random.default_rng(0))
        raw = ds.raw_features()
        centers = np.array(ds.provenance["centers"])
        d = ((raw[:, None, :] - centers[None]) ** 2).sum(-1)
        acc = np.mean(d.argmin(1) == ds.labels)
        assert acc >= 0.999

    @pytest.mark.parametrize("c,d", [(4, 16), (12, 3)])
    def test_center_distance(self, c, d):
        ds = make_blobs(c, 2, d, 3.0, np.random.default_rng(1))
        centers = np.array(ds.provenance["centers"])
        dist = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
        off = dist[np.triu_indices(c, 1)]
        assert off.min() >= 3.0 * np.sqrt(d) * (1 - 1e-12)

    def test_shapes_and_standardization(self):
        ds = make_blobs(3, 100, 6, 2.0, 0)
        assert len(ds) == 300 and ds.n_features == 6
        np.testing.assert_array_equal(np.bincount(ds.labels), [100, 100, 100])
        np.testing.assert_allclose(ds.features.mean(0), 0, atol=1e-12)
        np.testing.assert_allclose(ds.features.std(0), 1, rtol=1e-12)

    def test_one_per_class(self):
        assert len(make_blobs(3, 1, 4, 1.0, 0)) == 3

    def test_normalization_inverts(self):
        ds = make_blobs(3, 50, 4, 2.0, 0)
        back = ds.normalization.apply(ds.raw_features())
        np.testing.assert_allclose(back, ds.features, atol=1e-9)

    def test_deterministic(self):
        a = make_blobs(4, 20, 5, 1.0, np.random.default_rng(3))
        b = make_blobs(4, 20, 5, 1.0, np.random.default_rng(3))
        np.testing.assert_array_equal(a.features, b.features)

    @pytest.mark.parametrize("args", [(1, 5, 4, 1.0), (3, 0, 4, 1.0), (3, 5, 1, 1.0), (3, 5, 4, 0.0)])
    def test_invalid(self, args):
        with pytest.raises(DataConfigError):
            make_blobs(*args, 0)


class TestDataset:
    def test_label_range_checked(self):
        with pytest.raises(DataConfigError, match=r"\[0, 3\)"):
            LabeledDataset(np.zeros((2, 2)), [0, 3], 3)

    def test_length_mismatch(self):
        with pytest.raises(DataConfigError):
            LabeledDataset(np.zeros((3, 2)), [0, 1], 2)

    def test_non_finite(self):
        with pytest.raises(DataConfigError):
            LabeledDataset(np.array([[0.0, np.nan]]), [0], 2)


class TestSplit:
    def test_stratified_counts(self):
        ds = make_blobs(10, 100, 4, 1.0, 0)
        a, b = split(ds, 0.9, np.random.default_rng(0))
        assert (len(a), len(b)) == (900, 100)
        np.testing.assert_array_equal(np.bincount(a.labels), 90)
        np.testing.assert_array_equal(np.bincount(b.labels), 10)
        rows = {tuple(r) for r in a.features} | {tuple(r) for r in b.features}
        assert len(rows) == 1000

    def test_same_seed_same_split(self):
        ds = make_blobs(3, 20, 4, 1.0, 0)
        a1, _ = split(ds, 0.7, 5)
        a2, _ = split(ds, 0.7, 5)
        np.testing.assert_array_equal(a1.features, a2.features)

    def test_single_member_class(self):
        ds = LabeledDataset(np.arange(10.0).reshape(5, 2), [0, 0, 0, 0, 1], 2)
        with pytest.raises(DataConfigError, match="class 1"):
            split(ds, 0.5, 0)

    def test_bad_fraction(self):
        with pytest.raises(DataConfigError):
            split(make_blobs(2, 5, 2, 1.0, 0), 1.0, 0)


class TestIDX:
    def _files(self, tmp_path, n=6):
        rng = np.random.default_rng(0)
        imgs = rng.integers(0, 256, (n, 3, 4), dtype=np.uint8)
        labels = np.arange(n) % 10
        ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
        write_idx(ip, lp, imgs, labels)
        return ip, lp, imgs, labels

    def test_round_trip(self, tmp_path):
        ip, lp, imgs, labels = self._files(tmp_path)
        ds = load_idx(ip, lp)
        assert ds.n_classes == 10 and ds.n_features == 12
        np.testing.assert_allclose(ds.features, imgs.reshape(6, 12) / 255.0)
        np.testing.assert_array_equal(ds.labels, labels)
        np.testing.assert_allclose(ds.raw_features(), imgs.reshape(6, 12), atol=1e-9)

    def test_bad_magic_names_expected(self, tmp_path):
        ip, lp, _, _ = self._files(tmp_path)
        with pytest.raises(IDXFormatError, match="0x00000801"):
            read_idx_labels(ip)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty"
        p.write_bytes(b"")
        with pytest.raises(IDXFormatError, match="truncated"):
            read_idx_labels(p)

    def test_truncated_payload(self, tmp_path):
        ip, lp, _, _ = self._files(tmp_path)
        data = ip.read_bytes()
        ip.write_bytes(data[:-5])
        with pytest.raises(IDXFormatError, match="expected 72 bytes of pixel data, got 67"):
            load_idx(ip, lp)

    def test_count_mismatch(self, tmp_path):
        ip, _, _, _ = self._files(tmp_path, 6)
        lp = tmp_path / "lab5.idx"
        write_idx(tmp_path / "unused", lp, np.zeros((5, 1, 1)), np.zeros(5))
        with pytest.raises(IDXFormatError, match="count mismatch"):
            load_idx(ip, lp)


def test_csv_round_trip(tmp_path):
    ds = make_blobs(3, 7, 5, 1.5, 2)
    path = tmp_path / "d.csv"
    write_csv(path, ds)
    back = read_csv(path, n_classes=3)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
