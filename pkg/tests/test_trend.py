import numpy as np
import pytest

from pseudocov.trend import SingularMatrixError, design_matrix, gls_fit, ols_fit, wls_fit


class TestGls:
    def test_identity_exact_line(self):
        fit = gls_fit([[1.0], [2.0]], [1.0, 2.0], np.eye(2))
        assert fit.beta == pytest.approx(1.0)
        assert fit.variance == pytest.approx(0.2)

    def test_correlated_pair(self):
        # C^-1 = (1/3) [[2, -1], [-1, 2]]; X' C^-1 X = 2/3, X' C^-1 eta = 2
        fit = gls_fit([1.0, 1.0], [2.0, 4.0], [[2.0, 1.0], [1.0, 2.0]])
        assert fit.beta == pytest.approx(3.0)
        assert fit.variance == pytest.approx(1.5)

    def test_diagonal_matches_wls(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 8))
            X = design_matrix(rng.uniform(0, 10, n))
            eta = rng.normal(size=n)
            V = rng.uniform(0.01, 2, n)
            a, b = gls_fit(X, eta, np.diag(V)), wls_fit(X, eta, V)
            assert a.beta == pytest.approx(b.beta, rel=1e-12, abs=1e-14)
            assert a.variance == pytest.approx(b.variance, rel=1e-12)

    def test_variance_formula(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 8))
            X = design_matrix(rng.uniform(0, 10, n), intercept=bool(rng.integers(2)))
            if X.shape[1] > n:
                continue
            M = rng.normal(size=(n, n))
            C = M @ M.T + n * np.eye(n)
            eta = rng.normal(size=n)
            fit = gls_fit(X, eta, C)
            Ci = np.linalg.inv(C)
            cov = np.linalg.inv(X.T @ Ci @ X)
            np.testing.assert_allclose(fit.cov, cov, rtol=1e-10)
            np.testing.assert_allclose(fit.coef, cov @ X.T @ Ci @ eta, rtol=1e-9, atol=1e-12)

    def test_not_positive_definite(self):
        with pytest.raises(SingularMatrixError):
            gls_fit([1.0, 2.0], [1.0, 2.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_rank_deficient_design(self):
        with pytest.raises(SingularMatrixError):
            gls_fit([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]], [1.0, 2.0, 3.0], np.eye(3))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            gls_fit([1.0, 2.0], [1.0, 2.0, 3.0], np.eye(2))


class TestWlsOls:
    def test_wls_hand_value(self):
        fit = wls_fit([1.0, 2.0], [2.0, 4.0], [1.0, 4.0])
        assert fit.beta == pytest.approx(2.0)
        assert fit.method == "WLS"

    def test_unit_weights_are_ols(self, rng):
        X = design_matrix([1.0, 2.0, 5.0])
        eta = rng.normal(size=3)
        assert wls_fit(X, eta, np.ones(3)).beta == pytest.approx(ols_fit(X, eta).beta, rel=1e-14)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            wls_fit([1.0], [1.0], [0.0])

    def test_fixture_unadjusted(self, gl1992):
        fit = wls_fit(design_matrix(gl1992.exposures, gl1992.reference_exposure), gl1992.L, gl1992.V)
        assert fit.beta == pytest.approx(0.0334, abs=5e-4)
        assert fit.variance == pytest.approx(0.000349, abs=1e-5)


def test_design_matrix():
    X = design_matrix([2.0, 6.0], reference=1.0)
    np.testing.assert_array_equal(X, [[1.0], [5.0]])
    X = design_matrix([2.0, 6.0], intercept=True)
    np.testing.assert_array_equal(X, [[1.0, 2.0], [1.0, 6.0]])


def test_intercept_slope_is_reported():
    fit = ols_fit(design_matrix([1.0, 2.0, 3.0], intercept=True), [3.0, 5.0, 7.0])
    assert fit.beta == pytest.approx(2.0)
    np.testing.assert_allclose(fit.coef, [1.0, 2.0], atol=1e-12)
