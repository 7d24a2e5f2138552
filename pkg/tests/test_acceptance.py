"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``, ``FAIL`` or ``SKIP`` line; the lines are printed
as they happen and again in the pytest terminal summary. Criteria that need a
dataset absent from ``tests/fixtures`` are skipped with the missing file named.
Run directly with ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from pseudocov.cli import EXIT_SOLVER, main
from pseudocov.covariance import covariance_matrix
from pseudocov.gl import gl_cells, gl_gradient, gl_hessian, gl_objective, solve_gl_classic, solve_gl_convex
from pseudocov.hamling import (
    HamlingInput,
    HamlingOptions,
    equivariant_or,
    equivariant_rr,
    hamling_input,
    implied_quantities,
    solve_hamling,
)
from pseudocov.model import (
    DomainViolationError,
    EffectMeasure,
    InfeasibleError,
    Termination,
    validate_study,
)
from pseudocov.sim import SimConfig, run_trend_simulation
from pseudocov.trend import design_matrix, gls_fit, wls_fit

from conftest import FIXTURES, load_fixture, random_gl_study, random_interior_point

OR, RR = EffectMeasure.OR, EffectMeasure.RR
RESULTS: list[str] = []


@contextmanager
def criterion(label: str, title: str):
    try:
        yield
    except pytest.skip.Exception as exc:
        _report("SKIP", label, f"{title} ({exc.msg})")
        raise
    except BaseException as exc:
        first = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        _report("FAIL", label, f"{title}: {first}")
        raise
    else:
        _report("PASS", label, title)


def _report(status, label, text):
    line = f"{status} criterion {label}: {text}"
    RESULTS.append(line)
    print(line)


def _fixture_or_skip(name):
    if not (FIXTURES / name).exists():
        pytest.skip(f"fixture {name} not present")
    return validate_study(load_fixture(name))


def _pipeline(study, counts):
    X = design_matrix(study.exposures, study.reference_exposure)
    C = covariance_matrix(counts, study.V).matrix
    return gls_fit(X, study.L, C)


@pytest.fixture(scope="module")
def gl1992():
    return validate_study(load_fixture("gl1992_alcohol.json"))


# ---------------------------------------------------------------------------
# fixture-based criteria


def test_c01_or_estimates(gl1992):
    with criterion("1", "OR slope and variance on the GL-1992 data"):
        t0 = time.perf_counter()
        cgl, _ = solve_gl_convex(gl1992)
        fit_gl = _pipeline(gl1992, cgl)
        cham, _ = solve_hamling(hamling_input(gl1992))
        fit_ham = _pipeline(gl1992, cham)
        X = design_matrix(gl1992.exposures, gl1992.reference_exposure)
        fit_wls = wls_fit(X, gl1992.L, gl1992.V)
        elapsed = time.perf_counter() - t0
        assert fit_gl.beta == pytest.approx(0.0454, abs=5e-4)
        assert fit_gl.variance == pytest.approx(0.000427, abs=1e-5)
        assert fit_ham.beta == pytest.approx(0.04588, abs=5e-4)
        assert fit_ham.variance == pytest.approx(0.000421, abs=1e-5)
        assert fit_wls.beta == pytest.approx(0.0334, abs=5e-4)
        assert elapsed < 1.0


def test_c02_or_pseudo_counts(gl1992):
    with criterion("2", "OR pseudo-counts on the GL-1992 data"):
        cgl, _ = solve_gl_convex(gl1992)
        np.testing.assert_allclose(np.r_[cgl.a0, cgl.A], [160.5064, 70.3304, 95.4857, 124.6776], rtol=2e-3)
        cham, _ = solve_hamling(hamling_input(gl1992))
        np.testing.assert_allclose(np.r_[cham.a0, cham.A], [96.2653, 50.9654, 57.2180, 67.6989], rtol=1e-3)


def test_c03_rr_estimates():
    with criterion("3", "RR slope and pseudo-counts on the alcohol_crc atm data"):
        study = _fixture_or_skip("alcohol_crc_atm.json")
        cgl, _ = solve_gl_convex(study)
        cham, _ = solve_hamling(hamling_input(study))
        assert _pipeline(study, cgl).beta == pytest.approx(0.0071, abs=3e-4)
        assert _pipeline(study, cham).beta == pytest.approx(0.0063, abs=3e-4)
        assert cgl.a0 == pytest.approx(26.5973, rel=5e-3)
        assert cham.a0 == pytest.approx(26.4087, rel=5e-3)


def _sweep(doc, ts):
    cases = np.asarray(doc["cases"], dtype=float)
    for t in ts:
        d = dict(doc, group_totals=(cases + t).tolist())
        d.pop("cases")
        yield t, validate_study(d)


def test_c04_gl_sweep_real():
    with criterion("4", "GL robustness sweep N = A + t on the alcohol_cvd data"):
        if not (FIXTURES / "alcohol_cvd.json").exists():
            pytest.skip("fixture alcohol_cvd.json not present; the surrogate sweep runs as 4s")
        doc = load_fixture("alcohol_cvd.json")
        _check_sweep(doc)


def test_c04s_gl_sweep_surrogate():
    with criterion("4s", "GL robustness sweep N = A + t on the synthetic surrogate"):
        _check_sweep(load_fixture("gl_failure_surrogate.json"))


def _check_sweep(doc):
    for t, study in _sweep(doc, range(1, 21)):
        c, r = solve_gl_convex(study)
        assert r.termination is Termination.CONVERGED, f"t = {t}"
        assert c.all_positive(), f"t = {t}"
    study = next(_sweep(doc, [1]))[1]
    with pytest.raises(DomainViolationError):
        solve_gl_classic(study)


SMALL_V = (0.001, 0.01, 0.2, 0.9)


def test_c05_small_variance_real():
    with criterion("5", "Hamling small-variance case on the alcohol_cvd data"):
        study = _fixture_or_skip("alcohol_cvd.json")
        inp = hamling_input(study)
        inp = HamlingInput(inp.measure, inp.R, SMALL_V, inp.p, inp.z)
        c, _ = solve_hamling(inp)
        assert c.all_positive()
        np.testing.assert_allclose([c.a0, c.A[0], c.A[1], c.A[3]], [2897.8, 2976.1, 157.2, 9.2], rtol=1e-2)
        with pytest.raises(DomainViolationError):
            solve_hamling(inp, init=(10.0, 10.0))


def test_c05s_small_variance_surrogate():
    with criterion("5s", "Hamling small-variance mechanics on a synthetic OR input"):
        inp = HamlingInput(OR, [1.0, 1.5, 1.2, 0.6], SMALL_V, 0.3, 1.0)
        c, r = solve_hamling(inp)
        assert r.converged and c.all_positive()
        # a small start leaves the region where every denominator is positive
        with pytest.raises(DomainViolationError) as exc:
            solve_hamling(inp, init=(10.0, 10.0))
        assert min(exc.value.report.diagnostics["denominators"]) <= 0
        # without the guard the iteration solves the equations with negative cases, and that root is refused
        with pytest.raises(DomainViolationError) as exc:
            solve_hamling(inp, HamlingOptions(safeguard=False), init=(10.0, 10.0))
        assert min(exc.value.report.diagnostics["A"]) < 0


def test_c06_rr_counterexample(capsys):
    with criterion("6", "RR counter-example reports D = -33.4 and Infeasible"):
        tup = load_fixture("rr_counterexample.json")
        s = equivariant_rr(tup["n"], tup["p"], tup["z"], tup["r1"], tup["r2"])
        assert not s.feasible
        assert main(["check", "--input", str(FIXTURES / "rr_counterexample.json")]) == EXIT_SOLVER
        capsys.readouterr()
        d = math.sqrt(tup["r2"] ** 2 - 4 * tup["r2"] / tup["r1"])
        R = [(tup["r2"] + d) / 2, (tup["r2"] - d) / 2]
        with pytest.raises(InfeasibleError) as exc:
            solve_hamling(HamlingInput(RR, R, [1.0, 1.0], tup["p"], tup["z"]))
        assert np.linalg.norm(exc.value.report.diagnostics["residual"]) > 0
        # printed value; a direct evaluation of the discriminant gives about -98.31
        assert s.D == pytest.approx(-33.4, abs=0.1)


# ---------------------------------------------------------------------------
# fixture-free criteria


def test_c07_simulation():
    with criterion("7", "default simulation, 5000 replications"):
        t0 = time.perf_counter()
        s = run_trend_simulation(SimConfig(replications=5000))
        elapsed = time.perf_counter() - t0
        n = s.config.replications
        assert abs(s.mean_gls - 1) < 3 * math.sqrt(s.var_gls / n)
        assert abs(s.mean_ols - 1) < 3 * math.sqrt(s.var_ols / n)
        assert s.var_ols / s.var_gls > 1
        assert elapsed < 5.0


def test_c08_derivatives():
    with criterion("8", "gradient and Hessian against central differences"):
        rng = np.random.default_rng(108)
        for measure in ("or", "rr"):
            for _ in range(100):
                s = random_gl_study(rng, measure)
                A = random_interior_point(rng, s)
                g, H = gl_gradient(A, s), gl_hessian(A, s)
                assert np.linalg.eigvalsh(H)[0] > 0
                np.testing.assert_allclose(H, H.T, rtol=0, atol=0)
                fd_g, fd_H = np.empty(s.n), np.empty((s.n, s.n))
                a0, B, b0 = gl_cells(A, s)
                cells = np.r_[A, a0, B, b0] if measure == "or" else np.r_[A, a0]
                for k in range(s.n):
                    # keep the stencil inside the domain
                    h = min(1e-6 * max(1.0, abs(A[k])), cells.min() / (4 * s.n))
                    e = np.zeros(s.n)
                    e[k] = h
                    fd_g[k] = (gl_objective(A + e, s) - gl_objective(A - e, s)) / (2 * h)
                    fd_H[:, k] = (gl_gradient(A + e, s) - gl_gradient(A - e, s)) / (2 * h)
                assert np.max(np.abs(g - fd_g)) / (1 + np.max(np.abs(g))) < 1e-6
                assert np.max(np.abs(H - fd_H)) / (1 + np.max(np.abs(H))) < 1e-5


@pytest.mark.filterwarnings("ignore:fitted cases exceed")
def test_c09_uniqueness():
    with criterion("9", "GL minimizer independent of the starting point"):
        rng = np.random.default_rng(109)
        for measure in ("or", "rr"):
            for _ in range(50):
                s = random_gl_study(rng, measure)
                sols = [solve_gl_convex(s, init=random_interior_point(rng, s))[0].A for _ in range(10)]
                for A in sols[1:]:
                    assert np.max(np.abs(A - sols[0])) < 1e-6


def _random_or(rng):
    n = int(rng.integers(1, 9))
    return HamlingInput(OR, np.exp(rng.uniform(math.log(0.05), math.log(20), n)), rng.uniform(0.01, 5, n),
                        float(rng.uniform(0.05, 0.95)), float(np.exp(rng.uniform(math.log(0.1), math.log(10)))))


def test_c10_hamling_or_existence():
    with criterion("10", "Hamling OR solutions exist for 1000 random inputs"):
        rng = np.random.default_rng(110)
        for k in range(1000):
            inp = _random_or(rng)
            if k % 5 == 0:
                inp = HamlingInput(OR, inp.R, np.full(inp.n, inp.V[0]), inp.p, inp.z)
            c, r = solve_hamling(inp)
            assert r.final_residual_norm <= 1e-8
            assert c.all_positive()
            if k % 5 == 0:
                e = equivariant_or(inp.n, inp.p, inp.z, float(np.sum(1 / inp.R)), float(np.sum(inp.R)), inp.V[0])
                assert c.a0 == pytest.approx(e.a0, rel=1e-8)
                assert c.b0 == pytest.approx(e.b0, rel=1e-8)


@pytest.mark.filterwarnings("ignore:fitted cases exceed")
def test_c11_reconstruction():
    with criterion("11", "solutions reproduce their inputs"):
        rng = np.random.default_rng(111)
        for measure in ("or", "rr"):
            for _ in range(100):
                s = random_gl_study(rng, measure)
                c, _ = solve_gl_convex(s)
                np.testing.assert_allclose(c.log_estimates(), s.L, atol=1e-8, rtol=0)
        inputs = [_random_or(rng) for _ in range(200)]
        for _ in range(200):
            n = int(rng.integers(1, 6))
            totals = rng.uniform(50, 2000, n + 1)
            cases = totals * rng.uniform(0.01, 0.4, n + 1)
            q = implied_quantities(cases[0], totals[0], cases[1:], totals[1:], RR)
            inputs.append(HamlingInput(RR, q["R"], q["V"], q["p"], q["z"]))
        for inp in inputs:
            c, _ = solve_hamling(inp)
            q = implied_quantities(c.a0, c.b0, c.A, c.B, inp.measure)
            np.testing.assert_allclose(c.log_estimates(), np.log(inp.R), atol=1e-8, rtol=0)
            np.testing.assert_allclose(q["V"], inp.V, rtol=1e-8)
            assert q["p"] == pytest.approx(inp.p, rel=1e-8)
            assert q["z"] == pytest.approx(inp.z, rel=1e-8)


def test_c12_correlations():
    with criterion("12", "correlation scale invariance, Hamling identity, matrix shape"):
        rng = np.random.default_rng(112)
        for measure in ("or", "rr"):
            for _ in range(30):
                s = random_gl_study(rng, measure, n=int(rng.integers(2, 6)))
                c, _ = solve_gl_convex(s)
                base = covariance_matrix(c, s.V)
                np.testing.assert_array_equal(base.matrix, base.matrix.T)
                np.testing.assert_array_equal(np.diag(base.matrix), s.V)
                for k in (0.1, 1.0, 10.0):
                    np.testing.assert_allclose(covariance_matrix(c.scaled(k), s.V).correlations,
                                               base.correlations, rtol=1e-12, atol=0)
        for _ in range(100):
            n = int(rng.integers(2, 6))
            totals = rng.uniform(100, 3000, n + 1)
            cases = totals * rng.uniform(0.01, 0.3, n + 1)
            for measure, sign in ((OR, 1.0), (RR, -1.0)):
                q = implied_quantities(cases[0], totals[0] - (cases[0] if measure is OR else 0),
                                       cases[1:], totals[1:] - (cases[1:] if measure is OR else 0), measure)
                inp = HamlingInput(measure, q["R"], q["V"], q["p"], q["z"])
                c, _ = solve_hamling(inp)
                cov = covariance_matrix(c, inp.V)
                expected = (1 / c.a0 + sign / c.b0) / np.sqrt(np.outer(inp.V, inp.V))
                off = ~np.eye(n, dtype=bool)
                np.testing.assert_allclose(cov.correlations[off], expected[off], atol=1e-8, rtol=0)
                np.testing.assert_array_equal(cov.matrix, cov.matrix.T)
                np.testing.assert_array_equal(np.diag(cov.matrix), inp.V)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
