import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.exceptions import NotPositiveDefiniteError, RankDeficientError
from src.types import Ar1ErrorSpec
from src.utils.linalg import build_ar1_cov, cholesky, ols_fit


class TestBuildAr1Cov:
    def test_zero_correlation_is_identity(self):
        assert_array_equal(build_ar1_cov(3, Ar1ErrorSpec(sigma2=1.0, rho=0.0)), np.eye(3))

    def test_lag_structure(self):
        cov = build_ar1_cov(3, Ar1ErrorSpec(sigma2=1.0, rho=0.5))
        assert cov[0, 1] == cov[1, 2] == 0.5
        assert cov[0, 2] == 0.25
        assert_array_equal(cov, cov.T)

    def test_long_lag_entry(self):
        cov = build_ar1_cov(8, Ar1ErrorSpec(sigma2=2.0, rho=0.9))
        expected = 2.0
        for _ in range(7):
            expected *= 0.9
        assert_allclose(cov[0, 7], expected, rtol=1e-12)
        assert_allclose(cov[0, 7], 0.9565938, atol=1e-7)

    @pytest.mark.parametrize('sigma2, rho', [(0.0, 0.5), (-1.0, 0.5), (1.0, 1.0), (1.0, -0.1)])
    def test_invalid_spec_rejected(self, sigma2, rho):
        with pytest.raises(ValueError):
            Ar1ErrorSpec(sigma2=sigma2, rho=rho)

    def test_needs_at_least_one_time(self):
        with pytest.raises(ValueError):
            build_ar1_cov(0, Ar1ErrorSpec())


class TestCholesky:
    def test_identity(self):
        assert_allclose(cholesky(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        assert_allclose(cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_reconstructs_ar1(self):
        cov = build_ar1_cov(4, Ar1ErrorSpec(sigma2=1.0, rho=0.5))
        factor = cholesky(cov)
        assert_allclose(np.tril(factor), factor)
        assert_allclose(factor @ factor.T, cov, rtol=1e-10, atol=1e-12)

    def test_reports_failing_pivot(self):
        with pytest.raises(NotPositiveDefiniteError) as info:
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert info.value.pivot == 1

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match='symmetric'):
            cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_random_ar1_reconstruction(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(1, 13))
            spec = Ar1ErrorSpec(sigma2=float(rng.uniform(0.1, 20.0)), rho=float(rng.uniform(0.0, 0.99)))
            cov = build_ar1_cov(n, spec)
            factor = cholesky(cov)
            assert np.max(np.abs(factor @ factor.T - cov)) <= 1e-10 * np.max(np.abs(cov))


class TestOlsFit:
    def test_exact_line(self):
        t = np.arange(1.0, 9.0)
        design = np.column_stack([np.ones_like(t), t])
        assert_allclose(ols_fit(design, 2.0 + 3.0 * t), [2.0, 3.0], atol=1e-12)

    def test_intercept_only(self):
        assert_allclose(ols_fit(np.ones((5, 1)), np.full(5, 4.2)), [4.2])

    def test_matches_normal_equations(self, rng):
        t = np.arange(1.0, 9.0)
        design = np.column_stack([np.ones_like(t), t])
        response = rng.normal(size=8)
        expected = np.linalg.solve(design.T @ design, design.T @ response)
        assert_allclose(ols_fit(design, response), expected, atol=1e-10)

    def test_matrix_response_fits_each_column(self, rng):
        design = np.column_stack([np.ones(6), np.arange(6.0)])
        response = rng.normal(size=(6, 3))
        coefficients = ols_fit(design, response)
        assert coefficients.shape == (2, 3)
        for column in range(3):
            assert_allclose(coefficients[:, column], ols_fit(design, response[:, column]), atol=1e-12)

    def test_residuals_orthogonal_to_design(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            n = int(rng.integers(4, 20))
            p = int(rng.integers(1, 4))
            design = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))]) if p > 1 else np.ones((n, 1))
            response = rng.normal(size=n)
            residuals = response - design @ ols_fit(design, response)
            assert np.max(np.abs(design.T @ residuals)) < 1e-8

    def test_rank_deficiency_names_column(self):
        t = np.arange(1.0, 6.0)
        design = np.column_stack([np.ones_like(t), t, 2.0 * t])
        with pytest.raises(RankDeficientError) as info:
            ols_fit(design, t)
        assert info.value.column == 2

    def test_row_mismatch(self):
        with pytest.raises(ValueError):
            ols_fit(np.ones((4, 1)), np.ones(3))
