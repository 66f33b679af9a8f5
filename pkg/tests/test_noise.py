import csv

import numpy as np
import pytest

from neglearn.data import LabeledDataset
from neglearn.noise import (
    CIFAR10_ASYMM,
    MNIST_ASYMM,
    NoiseConfigError,
    NoiseSpec,
    builtin_asymm_map,
    format_asymm_map,
    inject_noise,
    parse_asymm_map,
    write_audit_csv,
)


def balanced(n, c, d=2):
    labels = np.arange(n) % c
    return LabeledDataset(np.zeros((n, d)), labels, c)


class TestSymmetric:
    def test_inclusive_actual_fraction(self):
        noisy = inject_noise(balanced(50_000, 10), NoiseSpec("symm_inc", 0.3, seed=1))
        assert abs(noisy.noise_fraction - 0.27) <= 0.01

    def test_exclusive_actual_fraction(self):
        noisy = inject_noise(balanced(50_000, 10), NoiseSpec("symm_exc", 0.4, seed=2))
        assert abs(noisy.noise_fraction - 0.40) <= 0.01

    def test_inclusive_redraw_can_keep_label(self):
        # of the r*N redraws, a fraction 1/c lands on the true class; with r = 1 the
        # flipped fraction is 1 - 1/c, within 3 binomial standard deviations
        n, c = 40_000, 5
        noisy = inject_noise(balanced(n, c), NoiseSpec("symm_inc", 1.0, seed=3))
        kept = 1 - noisy.noise_fraction
        sigma = np.sqrt((1 / c) * (1 - 1 / c) / n)
        assert abs(kept - 1 / c) < 3 * sigma

    def test_exclusive_flips_are_uniform_over_others(self):
        noisy = inject_noise(balanced(60_000, 4), NoiseSpec("symm_exc", 1.0, seed=4))
        assert noisy.noise_fraction == 1.0
        src0 = noisy.labels[noisy.clean_labels == 0]
        frac = np.bincount(src0, minlength=4) / len(src0)
        np.testing.assert_allclose(frac, [0, 1 / 3, 1 / 3, 1 / 3], atol=0.015)

    @pytest.mark.parametrize("kind", ["symm_inc", "symm_exc"])
    def test_zero_ratio_is_identity(self, kind):
        clean = balanced(1000, 7)
        noisy = inject_noise(clean, NoiseSpec(kind, 0.0, seed=5))
        np.testing.assert_array_equal(noisy.labels, clean.labels)
        assert not noisy.is_noisy.any()

    def test_exact_count(self):
        noisy = inject_noise(balanced(1000, 4), NoiseSpec("symm_exc", 0.25, seed=0, exact_count=True))
        assert noisy.is_noisy.sum() == 250

    def test_expected_actual_noise(self):
        assert NoiseSpec("symm_inc", 0.3).expected_actual_noise(10) == pytest.approx(0.27)
        assert NoiseSpec("symm_exc", 0.3).expected_actual_noise(10) == 0.3


class TestAsymmetric:
    def test_requires_map(self):
        with pytest.raises(NoiseConfigError, match="asymm_map"):
            NoiseSpec("asymm", 0.3)

    def test_builtin_maps(self):
        assert builtin_asymm_map("mnist") == {2: 7, 3: 8, 7: 1, 5: 6, 6: 5}
        assert builtin_asymm_map("CIFAR-10") == CIFAR10_ASYMM
        with pytest.raises(NoiseConfigError, match="supported: mnist, cifar10"):
            builtin_asymm_map("svhn")

    def test_mnist_five_six_swap(self):
        m = builtin_asymm_map("mnist")
        assert m[m[5]] == 5 and m[m[6]] == 6

    def test_parse_and_format(self):
        assert parse_asymm_map("2:7, 3:8") == {2: 7, 3: 8}
        assert parse_asymm_map("mnist") == MNIST_ASYMM
        assert format_asymm_map({3: 8, 2: 7}) == "2:7,3:8"

    def test_only_sources_flip_to_targets(self):
        clean = balanced(20_000, 10)
        noisy = inject_noise(clean, NoiseSpec("asymm", 0.4, MNIST_ASYMM, seed=6))
        flipped = noisy.is_noisy
        for s, t in MNIST_ASYMM.items():
            rows = clean.labels == s
            assert np.all(noisy.labels[rows & flipped] == t)
            assert abs(flipped[rows].mean() - 0.4) < 0.04
        others = ~np.isin(clean.labels, list(MNIST_ASYMM))
        assert not flipped[others].any()

    def test_map_outside_class_range(self):
        with pytest.raises(NoiseConfigError, match="outside"):
            inject_noise(balanced(100, 4), NoiseSpec("asymm", 0.5, {2: 7}))

    def test_self_loop_rejected(self):
        with pytest.raises(NoiseConfigError, match="self-loop"):
            NoiseSpec("asymm", 0.5, {1: 1})


class TestValidationAndIO:
    @pytest.mark.parametrize("kw", [dict(kind="gauss", ratio=0.1), dict(kind="symm_inc", ratio=1.5),
                                    dict(kind="symm_inc", ratio=0.1, asymm_map={0: 1})])
    def test_invalid_specs(self, kw):
        with pytest.raises(NoiseConfigError):
            NoiseSpec(**kw)

    def test_deterministic_for_seed(self):
        clean = balanced(500, 5)
        a = inject_noise(clean, NoiseSpec("symm_inc", 0.5, seed=9))
        b = inject_noise(clean, NoiseSpec("symm_inc", 0.5, seed=9))
        c = inject_noise(clean, NoiseSpec("symm_inc", 0.5, seed=10))
        np.testing.assert_array_equal(a.labels, b.labels)
        assert not np.array_equal(a.labels, c.labels)

    def test_clean_labels_preserved(self):
        clean = balanced(300, 3)
        noisy = inject_noise(clean, NoiseSpec("symm_exc", 0.5, seed=1))
        np.testing.assert_array_equal(noisy.clean_labels, clean.labels)
        sub = noisy.subset(np.arange(10, 20))
        np.testing.assert_array_equal(sub.clean_labels, clean.labels[10:20])
        np.testing.assert_array_equal(sub.is_noisy, noisy.is_noisy[10:20])

    def test_audit_csv(self, tmp_path):
        noisy = inject_noise(balanced(50, 3), NoiseSpec("symm_exc", 0.5, seed=1))
        path = tmp_path / "audit.csv"
        write_audit_csv(path, noisy)
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["id", "y_observed", "y_clean", "is_noisy"]
        assert [int(r["is_noisy"]) for r in rows] == noisy.is_noisy.astype(int).tolist()
        assert [int(r["y_observed"]) for r in rows] == noisy.labels.tolist()
