import sys
import json
from pathlib import Path

import numpy as np
import pytest

from pseudocov.model import StudyInput, validate_study

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture(name: str) -> dict:
    return json.loads((FIXTURES / name).read_text())


def study_from_counts(measure: str, cases, totals, variances=None, exposures=None) -> StudyInput:
    """A GL study whose reported estimates are exactly those of the given table.

    ``cases`` and ``totals`` include the reference group first.
    """
    cases = np.asarray(cases, dtype=float)
    totals = np.asarray(totals, dtype=float)
    a0, A = cases[0], cases[1:]
    n0, N = totals[0], totals[1:]
    if measure == "or":
        L = np.log(A * (n0 - a0) / (a0 * (N - A)))
        V0 = 1 / A + 1 / (N - A) + 1 / a0 + 1 / (n0 - a0)
    else:
        L = np.log(A * n0 / (a0 * N))
        V0 = 1 / A - 1 / N + 1 / a0 - 1 / n0
    V = V0 if variances is None else np.broadcast_to(np.asarray(variances, float), A.shape)
    doc = {"measure": measure, "log_estimates": L.tolist(), "variances": list(map(float, V)),
           "group_totals": totals.tolist(), "total_cases": float(cases.sum())}
    if exposures is not None:
        doc["exposures"] = list(exposures)
    return validate_study(doc)


def random_gl_study(rng: np.random.Generator, measure: str, n: int | None = None) -> StudyInput:
    n = int(rng.integers(1, 7)) if n is None else n
    totals = rng.uniform(20, 800, n + 1)
    if measure == "or":
        M1 = float(rng.uniform(0.1, 0.9) * totals.sum())
    else:
        M1 = float(rng.uniform(0.02, 0.4) * totals.sum())
    L = rng.normal(0.0, 0.7, n)
    return validate_study({"measure": measure, "log_estimates": L.tolist(), "variances": [0.1] * n,
                           "group_totals": totals.tolist(), "total_cases": M1})


def random_interior_point(rng: np.random.Generator, study: StudyInput) -> np.ndarray:
    """A strictly feasible case vector on a random ray from the null expected start."""
    from pseudocov.gl import gl_cells, gl_default_init

    A0 = gl_default_init(study)
    d = rng.normal(size=study.n)
    a0, B, b0 = gl_cells(A0, study)
    vals = [A0, [a0]]
    rates = [d, [-d.sum()]]
    if study.measure.value == "or":
        vals += [B, [b0]]
        rates += [-d, [d.sum()]]
    v, r = np.concatenate(vals), np.concatenate(rates)
    t_max = np.min(v[r < 0] / -r[r < 0]) if np.any(r < 0) else 10.0
    return A0 + rng.uniform(0.0, 0.95) * t_max * d


@pytest.fixture
def gl1992() -> StudyInput:
    return validate_study(load_fixture("gl1992_alcohol.json"))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
