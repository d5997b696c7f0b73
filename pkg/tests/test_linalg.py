import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigdims import linalg
from sigdims.errors import (
    DataError,
    DimensionError,
    InsufficientDataError,
    SymmetryError,
)


def two_pass_centered_gram(rows: np.ndarray) -> np.ndarray:
    """Oracle: center the columns explicitly, then form X'X."""
    mu = rows.mean(axis=0)
    x = rows - mu
    return x.T @ x


def two_loop_covariance(rows: np.ndarray) -> np.ndarray:
    """Oracle: textbook one-pass-per-entry sample covariance."""
    d, m = rows.shape
    mu = rows.mean(axis=0)
    cov = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            cov[i, j] = np.sum((rows[:, i] - mu[i]) * (rows[:, j] - mu[j])) / (d - 1)
    return cov


class TestAccumulate:
    def test_identity_rows(self):
        acc = linalg.CovAccumulator(2)
        linalg.accumulate(acc, np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert acc.d == 2
        assert np.array_equal(acc.sum, [1.0, 1.0])
        assert np.array_equal(acc.gram, np.eye(2))

    def test_two_batches_equal_one(self):
        rng = np.random.default_rng(0)
        b1, b2 = rng.normal(size=(30, 5)), rng.normal(size=(70, 5))
        split = linalg.CovAccumulator(5)
        linalg.accumulate(split, b1)
        linalg.accumulate(split, b2)
        joint = linalg.CovAccumulator(5)
        linalg.accumulate(joint, np.vstack([b1, b2]))
        c1, c2 = linalg.finalize(split), linalg.finalize(joint)
        assert np.linalg.norm(c1 - c2) <= 1e-9 * np.linalg.norm(c2)

    def test_standard_normal_covariance_near_identity(self):
        rng = np.random.default_rng(7)
        rows = rng.standard_normal((500, 16))
        acc = linalg.CovAccumulator(16)
        linalg.accumulate(acc, rows)
        c = linalg.finalize(acc)
        cov = c / (acc.d - 1)
        assert np.allclose(cov, two_loop_covariance(rows), atol=1e-10)
        assert np.max(np.abs(cov - np.eye(16))) < 0.2

    def test_column_mismatch(self):
        acc = linalg.CovAccumulator(3)
        with pytest.raises(DimensionError):
            linalg.accumulate(acc, np.zeros((4, 2)))

    def test_nonfinite_names_batch(self):
        acc = linalg.CovAccumulator(2)
        linalg.accumulate(acc, np.zeros((2, 2)))
        bad = np.array([[1.0, np.nan]])
        with pytest.raises(DataError, match="batch 1"):
            linalg.accumulate(acc, bad)

    def test_partition_invariance(self):
        rng = np.random.default_rng(3)
        rows = rng.normal(size=(200, 8)) * 3.0 + 1.0
        ref = linalg.finalize(linalg.accumulate(linalg.CovAccumulator(8), rows))
        for seed in range(5):
            cuts = np.sort(np.random.default_rng(seed).choice(199, 4, replace=False) + 1)
            acc = linalg.CovAccumulator(8)
            for part in np.split(rows, cuts):
                linalg.accumulate(acc, part)
            got = linalg.finalize(acc)
            assert np.linalg.norm(got - ref) <= 1e-9 * np.linalg.norm(ref)


class TestFinalize:
    def test_constant_rows_zero_matrix(self):
        acc = linalg.CovAccumulator(2)
        linalg.accumulate(acc, np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert np.array_equal(linalg.finalize(acc), np.zeros((2, 2)))

    def test_hand_computed(self):
        acc = linalg.CovAccumulator(2)
        linalg.accumulate(acc, np.array([[0.0, 0.0], [2.0, 2.0]]))
        assert np.allclose(linalg.finalize(acc), [[2.0, 2.0], [2.0, 2.0]])

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(11)
        rows = rng.normal(2.0, 5.0, size=(500, 16))
        acc = linalg.CovAccumulator(16)
        linalg.accumulate(acc, rows)
        c = linalg.finalize(acc)
        ref = two_pass_centered_gram(rows)
        assert np.linalg.norm(c - ref) <= 1e-9 * np.linalg.norm(ref)

    def test_insufficient_data(self):
        acc = linalg.CovAccumulator(2)
        linalg.accumulate(acc, np.array([[1.0, 2.0]]))
        with pytest.raises(InsufficientDataError):
            linalg.finalize(acc)


class TestEigendecompose:
    def test_diagonal_input(self):
        spec = linalg.eigendecompose(np.diag([4.0, 1.0]))
        assert np.allclose(spec.eigenvalues, [4.0, 1.0])
        assert np.allclose(np.abs(spec.eigenvectors), np.eye(2))

    def test_closed_form_2x2(self):
        spec = linalg.eigendecompose(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(spec.eigenvalues, [3.0, 1.0])
        r = 1.0 / np.sqrt(2.0)
        assert np.allclose(np.abs(spec.eigenvectors[:, 0]), [r, r])
        assert np.allclose(np.abs(spec.eigenvectors[:, 1]), [r, r])
        assert np.isclose(abs(spec.eigenvectors[:, 1] @ [1.0, -1.0]), np.sqrt(2.0))

    def test_random_32x32_against_oracle(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(32, 32))
        c = (a + a.T) / 2.0
        spec = linalg.eigendecompose(c)
        recon = spec.eigenvectors @ np.diag(spec.eigenvalues) @ spec.eigenvectors.T
        assert np.linalg.norm(recon - c) <= 1e-8 * np.linalg.norm(c)
        oracle = np.sort(np.linalg.eigvalsh(c))[::-1]
        scale = np.max(np.abs(oracle))
        assert np.max(np.abs(spec.eigenvalues - oracle)) <= 1e-6 * scale

    def test_residual_and_orthonormality(self):
        rng = np.random.default_rng(9)
        for m in (1, 2, 3, 8, 17):
            a = rng.normal(size=(m, m))
            c = a @ a.T
            spec = linalg.eigendecompose(c)
            v, lam = spec.eigenvectors, spec.eigenvalues
            assert np.linalg.norm(c @ v - v * lam) <= 1e-8 * max(np.linalg.norm(c), 1e-30)
            assert np.max(np.abs(v.T @ v - np.eye(m))) <= 1e-8

    def test_trace_equals_eigenvalue_sum(self):
        rng = np.random.default_rng(13)
        a = rng.normal(size=(12, 12))
        c = (a + a.T) / 2.0
        spec = linalg.eigendecompose(c)
        assert np.isclose(spec.total_variance, np.trace(c), rtol=1e-9)
        assert np.isclose(spec.eigenvalues.sum(), spec.total_variance, rtol=1e-9)

    def test_cumulative_curve_shape(self):
        rng = np.random.default_rng(17)
        a = rng.normal(size=(10, 40))
        spec = linalg.eigendecompose(a.T @ a)  # PSD, rank 10
        assert np.all(np.diff(spec.cumulative) >= 0)
        assert spec.cumulative[-1] == 1.0

    def test_rejects_non_symmetric(self):
        with pytest.raises(SymmetryError):
            linalg.eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(DimensionError):
            linalg.eigendecompose(np.zeros((2, 3)))

    def test_deterministic(self):
        rng = np.random.default_rng(21)
        a = rng.normal(size=(16, 16))
        c = (a + a.T) / 2.0
        s1 = linalg.eigendecompose(c.copy())
        s2 = linalg.eigendecompose(c.copy())
        assert np.array_equal(s1.eigenvalues, s2.eigenvalues)
        assert np.array_equal(s1.eigenvectors, s2.eigenvectors)


class TestSignificantDimensions:
    def test_top_component_at_exact_threshold(self):
        spec = linalg.eigendecompose(np.diag([999.0, 1.0]))
        assert linalg.significant_dimensions(spec, 0.999) == 1

    def test_geometric_spectrum_needs_11_of_64(self):
        # Geometric decay tuned so the knee sits at 11 components.
        spec = linalg.eigendecompose(np.diag(0.52 ** np.arange(64)))
        assert linalg.significant_dimensions(spec, 0.999) == 11

    def test_uniform_spectrum_needs_all(self):
        spec = linalg.eigendecompose(np.eye(10))
        assert linalg.significant_dimensions(spec, 0.999) == 10

    def test_full_support_at_threshold_one(self):
        spec = linalg.eigendecompose(np.diag([3.0, 2.0, 1.0]))
        assert linalg.significant_dimensions(spec, 1.0) == 3

    def test_dead_spectrum_warns_and_returns_zero(self):
        spec = linalg.eigendecompose(np.zeros((4, 4)))
        assert spec.dead
        with pytest.warns(UserWarning, match="dead layer"):
            assert linalg.significant_dimensions(spec, 0.999) == 0

    def test_threshold_validation(self):
        spec = linalg.eigendecompose(np.eye(2))
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                linalg.significant_dimensions(spec, bad)

    @given(st.integers(min_value=0, max_value=1000))
    def test_monotone_in_threshold(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(6, 9))
        spec = linalg.eigendecompose(a.T @ a / 6.0)
        counts = [
            linalg.significant_dimensions(spec, t)
            for t in (0.5, 0.9, 0.99, 0.999, 1.0)
        ]
        assert counts == sorted(counts)

    @settings(max_examples=30)
    @given(
        st.integers(min_value=1, max_value=5),
        st.integers(min_value=0, max_value=6),
        st.integers(min_value=0, max_value=1000),
    )
    def test_duplicated_columns_bound_rank(self, k, extra, seed):
        # k independent columns plus `extra` exact copies: the reported
        # dimension count never exceeds k at any threshold.
        rng = np.random.default_rng(seed)
        base = rng.normal(size=(400, k))
        copies = base[:, rng.integers(0, k, size=extra)]
        rows = np.hstack([base, copies])
        acc = linalg.CovAccumulator(k + extra)
        linalg.accumulate(acc, rows)
        spec = linalg.eigendecompose(linalg.finalize(acc))
        for t in (0.5, 0.999, 1.0):
            assert linalg.significant_dimensions(spec, t) <= k


class TestProjectFilters:
    def test_identity_spectrum_is_identity_map(self):
        bank = np.random.default_rng(0).normal(size=(4, 2, 3, 3))
        spec = linalg.eigendecompose(np.diag([4.0, 3.0, 2.0, 1.0]))
        assert np.allclose(linalg.project_filters(bank, spec), bank)

    def test_duplicate_filters_sum_and_difference(self):
        f = np.random.default_rng(1).normal(size=(3, 3))
        bank = np.stack([f, f])
        # Activations of two identical filters have a rank-1 Gram.
        spec = linalg.eigendecompose(np.array([[2.0, 2.0], [2.0, 2.0]]))
        out = linalg.project_filters(bank, spec)
        assert np.allclose(out[0], 2.0 * f / np.sqrt(2.0))
        assert np.allclose(out[1], 0.0, atol=1e-12)

    def test_frobenius_norm_preserved(self):
        rng = np.random.default_rng(2)
        bank = rng.normal(size=(8, 3, 3, 3))
        a = rng.normal(size=(8, 8))
        spec = linalg.eigendecompose(a @ a.T)
        out = linalg.project_filters(bank, spec)
        assert np.isclose(np.linalg.norm(out), np.linalg.norm(bank), rtol=1e-9)

    def test_count_mismatch(self):
        spec = linalg.eigendecompose(np.eye(3))
        with pytest.raises(DimensionError):
            linalg.project_filters(np.zeros((4, 1, 3, 3)), spec)
