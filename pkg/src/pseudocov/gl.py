"""Greenland-Longnecker pseudo-counts from group totals and total cases.

The GL root-finding problem ``g(A) = 0`` is the stationarity condition of a
strictly convex sum of entropic terms ``f(x) = x log x - x``, so it can be
solved by a Newton minimizer with a fraction-to-boundary rule and Armijo
backtracking, which converges from any strictly feasible start.
:func:`solve_gl_classic` keeps the undamped Newton iteration for comparison.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from ._linalg import diag_plus_ones, solve_diag_plus_ones
from .model import (
    DomainViolationError,
    EffectMeasure,
    InfeasibleError,
    MaxIterationsError,
    PseudoCounts,
    SolveReport,
    StudyInput,
    Termination,
)

__all__ = [
    "GlOptions",
    "InfeasiblePointError",
    "gl_objective",
    "gl_gradient",
    "gl_hessian",
    "gl_default_init",
    "gl_cells",
    "is_feasible",
    "solve_gl_convex",
    "solve_gl_classic",
]


class InfeasiblePointError(ValueError):
    """A derived cell count is outside the domain of the logarithm."""


@dataclass(frozen=True)
class GlOptions:
    tol_grad: float = 1e-10
    max_iter: int = 100
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    boundary_fraction: float = 0.99
    # step-norm stopping rule of the classic iteration
    classic_tol: float = 1e-4

    def __post_init__(self):
        if not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")
        if not (isinstance(self.max_iter, int) and self.max_iter > 0):
            raise ValueError("max_iter must be a positive integer")
        for name in ("armijo_c", "backtrack_factor", "boundary_fraction"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.classic_tol > 0:
            raise ValueError("classic_tol must be positive")


def _require_gl(study: StudyInput) -> None:
    if not study.has_gl_fields:
        raise ValueError("GL needs group_totals and total_cases")


def gl_cells(A: np.ndarray, study: StudyInput) -> tuple[float, np.ndarray, float]:
    """Return ``(a0, B, b0)`` implied by case counts ``A``.

    OR: ``B`` and ``b0`` are the non-case complements of the group totals.
    RR: ``B = N_+`` and ``b0 = n0`` are the known group totals.
    """
    A = np.asarray(A, dtype=float)
    a0 = study.M1 - A.sum()
    if study.measure is EffectMeasure.OR:
        return a0, study.N_plus - A, study.n0 - a0
    return a0, study.N_plus.copy(), study.n0


def is_feasible(A: np.ndarray, study: StudyInput) -> bool:
    """Strict interiority of ``A`` for the study's measure."""
    A = np.asarray(A, dtype=float)
    if A.shape != (study.n,) or not np.all(np.isfinite(A)):
        return False
    a0, B, b0 = gl_cells(A, study)
    ok = bool(np.all(A > 0) and a0 > 0)
    if study.measure is EffectMeasure.OR:
        ok = ok and bool(np.all(B > 0) and b0 > 0)
    return ok


def _check_interior(A: np.ndarray, study: StudyInput) -> tuple[np.ndarray, float, np.ndarray, float]:
    _require_gl(study)
    A = np.asarray(A, dtype=float)
    if A.shape != (study.n,):
        raise ValueError(f"A must have length {study.n}")
    if not is_feasible(A, study):
        raise InfeasiblePointError("A is not strictly feasible: some derived count is <= 0")
    a0, B, b0 = gl_cells(A, study)
    return A, a0, B, b0


def _entropic(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(xlogy(x, x) - x))


def gl_objective(A: np.ndarray, study: StudyInput) -> float:
    """Entropic objective whose gradient is the GL root-finding function.

    OR: ``-L.A + f(a0) + sum f(B) + sum f(A) + f(b0)``.
    RR: ``A.(-R - log N_+ + log n0) + sum f(A) + f(a0)``.
    Zero cells are allowed (``0 log 0 = 0``); negative ones are not.
    """
    _require_gl(study)
    A = np.asarray(A, dtype=float)
    if A.shape != (study.n,):
        raise ValueError(f"A must have length {study.n}")
    a0, B, b0 = gl_cells(A, study)
    L = study.L
    if study.measure is EffectMeasure.OR:
        cells = np.concatenate([A, B, [a0, b0]])
        if np.any(cells < 0) or not np.all(np.isfinite(cells)):
            raise InfeasiblePointError("negative derived count")
        return float(-L @ A + _entropic(cells))
    cells = np.concatenate([A, [a0]])
    if np.any(cells < 0) or not np.all(np.isfinite(cells)):
        raise InfeasiblePointError("negative derived count")
    lin = -L - np.log(study.N_plus) + math.log(study.n0)
    return float(lin @ A + _entropic(cells))


def gl_gradient(A: np.ndarray, study: StudyInput) -> np.ndarray:
    A, a0, B, b0 = _check_interior(A, study)
    if study.measure is EffectMeasure.OR:
        return -study.L - math.log(a0) - np.log(B) + np.log(A) + math.log(b0)
    return -study.L + np.log(A) - np.log(study.N_plus) - math.log(a0) + math.log(study.n0)


def _hessian_parts(A: np.ndarray, a0: float, B: np.ndarray, b0: float,
                   measure: EffectMeasure) -> tuple[np.ndarray, float]:
    if measure is EffectMeasure.OR:
        return 1.0 / A + 1.0 / B, 1.0 / a0 + 1.0 / b0
    return 1.0 / A, 1.0 / a0


def gl_hessian(A: np.ndarray, study: StudyInput) -> np.ndarray:
    """Hessian ``diag(d) + s 11^T`` of :func:`gl_objective` (SPD on the interior)."""
    A, a0, B, b0 = _check_interior(A, study)
    d, s = _hessian_parts(A, a0, B, b0, study.measure)
    return diag_plus_ones(d, s)


def gl_default_init(study: StudyInput) -> np.ndarray:
    """Null expected case counts ``M1 N_+ / sum(N)``, nudged off the boundary."""
    _require_gl(study)
    N = study.N
    A = study.M1 * study.N_plus / N.sum()
    if study.measure is EffectMeasure.OR:
        lo, hi = np.zeros_like(A), study.N_plus
        mid = 0.5 * (lo + hi)
        near_lo = A - lo < 1e-9
        near_hi = hi - A < 1e-9
        A = np.where(near_lo, lo + 0.99 * (mid - lo), A)
        A = np.where(near_hi, hi - 0.99 * (hi - mid), A)
    return A


def _max_step(A: np.ndarray, a0: float, B: np.ndarray, b0: float, d: np.ndarray,
              measure: EffectMeasure) -> float:
    """Largest t with every cell still nonnegative along ``A + t d``."""
    vals = [A, np.array([a0])]
    rates = [d, np.array([-d.sum()])]
    if measure is EffectMeasure.OR:
        vals += [B, np.array([b0])]
        rates += [-d, np.array([d.sum()])]
    v = np.concatenate(vals)
    r = np.concatenate(rates)
    shrinking = r < 0
    if not np.any(shrinking):
        return math.inf
    return float(np.min(v[shrinking] / -r[shrinking]))


def _counts(A: np.ndarray, study: StudyInput) -> PseudoCounts:
    a0, B, b0 = gl_cells(A, study)
    return PseudoCounts(study.measure, A, a0, B, b0)


def _start(study: StudyInput, init) -> np.ndarray:
    _require_gl(study)
    if study.M1 <= 0 or (study.measure is EffectMeasure.OR and study.M1 >= study.N.sum()):
        report = SolveReport(0, math.nan, Termination.INFEASIBLE,
                             message="no strictly feasible case counts exist (need 0 < M1 < sum(N))")
        raise InfeasibleError(report.message, report)
    A = gl_default_init(study) if init is None else np.array(init, dtype=float)
    if not is_feasible(A, study):
        raise InfeasiblePointError("initial A is not strictly feasible")
    return A


def solve_gl_convex(study: StudyInput, opts: GlOptions | None = None,
                    init: np.ndarray | None = None) -> tuple[PseudoCounts, SolveReport]:
    """Minimize the entropic GL objective by safeguarded Newton steps.

    Each step follows ``d = -H^{-1} g`` (Sherman-Morrison solve), is cut to
    ``boundary_fraction`` of the distance to the nearest zero cell, then
    halved until the Armijo condition holds. Stops when ``|g|_inf <= tol_grad``.

    Raises :class:`InfeasibleError` when no interior point exists and
    :class:`MaxIterationsError` when the iteration budget runs out.
    """
    opts = opts or GlOptions()
    A = _start(study, init)
    measure = study.measure
    trajectory: list[float] = []
    message = ""
    for it in range(opts.max_iter + 1):
        a0, B, b0 = gl_cells(A, study)
        g = gl_gradient(A, study)
        gnorm = float(np.max(np.abs(g)))
        trajectory.append(gnorm)
        G = gl_objective(A, study)
        if gnorm <= opts.tol_grad:
            report = SolveReport(it, gnorm, Termination.CONVERGED, final_objective=G,
                                 trajectory=tuple(trajectory), message="gradient tolerance reached")
            if measure is EffectMeasure.RR and np.any(A > study.N_plus):
                warnings.warn("fitted cases exceed group totals for some level", stacklevel=2)
            return _counts(A, study), report
        if it == opts.max_iter:
            break
        dvec, s = _hessian_parts(A, a0, B, b0, measure)
        d = -solve_diag_plus_ones(dvec, s, g)
        slope = float(g @ d)
        if slope >= 0:  # cannot happen for SPD H in exact arithmetic
            d, slope = -g, -float(g @ g)
        t = min(1.0, opts.boundary_fraction * _max_step(A, a0, B, b0, d, measure))
        slack = 8 * np.finfo(float).eps * max(1.0, abs(G))
        for _ in range(80):
            trial = A + t * d
            if is_feasible(trial, study) and gl_objective(trial, study) <= G + opts.armijo_c * t * slope + slack:
                break
            t *= opts.backtrack_factor
        else:
            message = "line search failed to find a decrease"
            break
        A = trial
    a0, B, b0 = gl_cells(A, study)
    report = SolveReport(len(trajectory) - 1, trajectory[-1], Termination.MAX_ITERATIONS,
                         final_objective=gl_objective(A, study), trajectory=tuple(trajectory),
                         message=message or f"gradient norm above {opts.tol_grad} after {opts.max_iter} iterations",
                         diagnostics={"A": A.tolist()})
    raise MaxIterationsError(report.message, report)


def solve_gl_classic(study: StudyInput, opts: GlOptions | None = None,
                     init: np.ndarray | None = None) -> tuple[PseudoCounts, SolveReport]:
    """The original undamped Newton iteration.

    ``A <- A + H^{-1} e`` with ``e = -g`` until ``|H^{-1} e|_2 < classic_tol``.
    No safeguard: an iterate that leaves the domain of the logarithm ends
    the run with :class:`DomainViolationError`.
    """
    opts = opts or GlOptions()
    A = _start(study, init)
    measure = study.measure
    trajectory: list[float] = []
    difference = 1.0
    it = 0
    while difference >= opts.classic_tol:
        if not is_feasible(A, study):
            a0, B, b0 = gl_cells(A, study)
            report = SolveReport(it, math.nan, Termination.DOMAIN_VIOLATION, trajectory=tuple(trajectory),
                                 message="iterate left the domain of the logarithm",
                                 diagnostics={"A": A.tolist(), "a0": float(a0), "B": np.asarray(B).tolist(),
                                              "b0": float(b0)})
            raise DomainViolationError(report.message, report)
        if it == opts.max_iter:
            report = SolveReport(it, float(np.max(np.abs(gl_gradient(A, study)))), Termination.MAX_ITERATIONS,
                                 trajectory=tuple(trajectory), message="step norm did not fall below tolerance")
            raise MaxIterationsError(report.message, report)
        a0, B, b0 = gl_cells(A, study)
        e = -gl_gradient(A, study)
        dvec, s = _hessian_parts(A, a0, B, b0, measure)
        step = solve_diag_plus_ones(dvec, s, e)
        A = A + step
        difference = float(np.linalg.norm(step))
        trajectory.append(difference)
        it += 1
    if not is_feasible(A, study):
        report = SolveReport(it, math.nan, Termination.DOMAIN_VIOLATION, trajectory=tuple(trajectory),
                             message="final iterate outside the domain of the logarithm",
                             diagnostics={"A": A.tolist()})
        raise DomainViolationError(report.message, report)
    gnorm = float(np.max(np.abs(gl_gradient(A, study))))
    report = SolveReport(it, difference, Termination.CONVERGED, final_objective=gl_objective(A, study),
                         trajectory=tuple(trajectory), message="step norm below tolerance",
                         diagnostics={"gradient_inf_norm": gnorm})
    return _counts(A, study), report
