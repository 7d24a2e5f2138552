import numpy as np
import pytest

from pseudocov.covariance import NonPositiveRadicand, covariance_matrix, pairwise_correlation
from pseudocov.gl import solve_gl_convex
from pseudocov.hamling import HamlingInput, hamling_input, solve_hamling
from pseudocov.model import EffectMeasure, PseudoCounts

from conftest import random_gl_study

OR, RR = EffectMeasure.OR, EffectMeasure.RR


def uniform(measure, value, n=2):
    return PseudoCounts(measure, [value] * n, value, [value] * n, value)


class TestPairwise:
    @pytest.mark.parametrize("value", [1.0, 7.0])
    def test_uniform_or_counts(self, value):
        assert pairwise_correlation(uniform(OR, value), 0, 1) == pytest.approx(0.5, rel=1e-15)

    def test_rr(self):
        c = PseudoCounts(RR, [1.0, 1.0], 1.0, [2.0, 2.0], 2.0)
        assert pairwise_correlation(c, 0, 1) == pytest.approx(0.5, rel=1e-15)

    def test_rr_nonpositive_radicand(self):
        # 1/1 - 1/2 + 1/4 - 1/0.5: level 0 has B < A
        c = PseudoCounts(RR, [4.0, 1.0], 1.0, [0.5, 2.0], 2.0)
        with pytest.raises(NonPositiveRadicand) as exc:
            pairwise_correlation(c, 0, 1)
        assert exc.value.index == 0

    def test_index_errors(self):
        c = uniform(OR, 1.0)
        with pytest.raises(IndexError):
            pairwise_correlation(c, 0, 2)
        with pytest.raises(ValueError):
            pairwise_correlation(c, 1, 1)

    def test_scale_invariance(self, rng):
        for measure in ("or", "rr"):
            for _ in range(20):
                counts, _ = solve_gl_convex(random_gl_study(rng, measure, n=int(rng.integers(2, 6))))
                base = covariance_matrix(counts, np.ones(counts.n)).correlations
                for k in (0.1, 1.0, 10.0):
                    scaled = covariance_matrix(counts.scaled(k), np.ones(counts.n)).correlations
                    np.testing.assert_allclose(scaled, base, rtol=1e-12, atol=0)


class TestMatrix:
    def test_hamling_symmetric_solution(self):
        c = PseudoCounts(OR, [3.0, 3.0], 6.0, [3.0, 3.0], 6.0)
        cov = covariance_matrix(c, [1.0, 1.0])
        assert cov.matrix[0, 1] == pytest.approx(1 / 3, rel=1e-15)
        np.testing.assert_array_equal(np.diag(cov.matrix), [1.0, 1.0])

    def test_reported_diagonal_kept(self):
        c = PseudoCounts(OR, [5.0, 9.0], 4.0, [20.0, 3.0], 11.0)
        cov = covariance_matrix(c, [0.25, 0.49])
        assert cov.matrix[0, 0] == 0.25 and cov.matrix[1, 1] == 0.49
        np.testing.assert_array_equal(cov.matrix, cov.matrix.T)
        assert 0 < cov.correlations[0, 1] < 1

    def test_hamling_identity_or(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 7))
            inp = HamlingInput(OR, np.exp(rng.normal(0, 1, n)), rng.uniform(0.02, 2, n),
                               float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.3, 3)))
            c, _ = solve_hamling(inp)
            cov = covariance_matrix(c, inp.V)
            shared = 1 / c.a0 + 1 / c.b0
            expected = shared / np.sqrt(np.outer(inp.V, inp.V))
            off = ~np.eye(n, dtype=bool)
            np.testing.assert_allclose(cov.correlations[off], expected[off], atol=1e-8, rtol=0)
            # consequently every covariance is the same number
            np.testing.assert_allclose(cov.matrix[off], shared, rtol=1e-8)

    def test_hamling_identity_rr(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 6))
            totals = rng.uniform(100, 3000, n + 1)
            cases = totals * rng.uniform(0.01, 0.3, n + 1)
            A, a0, B, b0 = cases[1:], cases[0], totals[1:], totals[0]
            R = A * b0 / (a0 * B)
            V = 1 / A - 1 / B + 1 / a0 - 1 / b0
            p = b0 / totals.sum()
            z = totals.sum() / cases.sum()
            c, _ = solve_hamling(HamlingInput(RR, R, V, p, z))
            cov = covariance_matrix(c, V)
            expected = (1 / c.a0 - 1 / c.b0) / np.sqrt(np.outer(V, V))
            off = ~np.eye(n, dtype=bool)
            np.testing.assert_allclose(cov.correlations[off], expected[off], atol=1e-8, rtol=0)

    def test_fixture_hamling_entries_identical(self, gl1992):
        c, _ = solve_hamling(hamling_input(gl1992))
        cov = covariance_matrix(c, gl1992.V)
        off = cov.matrix[~np.eye(3, dtype=bool)]
        np.testing.assert_allclose(off, off[0], rtol=1e-9)

    def test_min_eigenvalue_reported(self, gl1992):
        c, _ = solve_gl_convex(gl1992)
        cov = covariance_matrix(c, gl1992.V)
        assert cov.min_eigenvalue == pytest.approx(np.linalg.eigvalsh(cov.matrix)[0])
        assert cov.is_psd

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            covariance_matrix(uniform(OR, 1.0), [1.0])

    def test_csv_and_json(self):
        cov = covariance_matrix(uniform(OR, 1.0), [4.0, 4.0], labels=["2", "6"])
        lines = cov.to_csv().splitlines()
        assert lines[0] == "2,6"
        assert lines[1] == "4.0,2.0"
        assert '"min_eigenvalue": 2.0' in cov.to_json()
