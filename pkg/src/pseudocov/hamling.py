"""Hamling pseudo-counts from reported estimates, variances, ``p`` and ``z``.

Given the reference cells ``(a0, b0)`` every other cell follows in closed
form from the reported ratio and variance, which leaves two equations in
two unknowns::

    (1 - p)/p * b0   = sum_i B_i(a0, b0)
    b0/(z p) - a0    = sum_i A_i(a0, b0)

For odds ratios the system always has a positive solution reachable from a
start where every variance denominator is positive. For relative risks it
can be unsolvable; with equal variances the quadratic in ``c = a0/b0``
decides the matter exactly (:func:`equivariant_rr`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import optimize
from scipy.special import expit

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
    "HamlingInput",
    "HamlingOptions",
    "DenominatorNonPositive",
    "EquivariantSummary",
    "hamling_input",
    "hamling_cells",
    "hamling_residual",
    "hamling_robust_init",
    "solve_hamling",
    "equivariant_or",
    "equivariant_rr",
    "equivariant_summary",
    "classic_pz_residual",
    "implied_quantities",
]


class DenominatorNonPositive(ValueError):
    """``(a0, b0)`` lies outside the region where every variance denominator is positive."""

    def __init__(self, index: int, value: float):
        super().__init__(f"denominator {index} is {value:.6g} <= 0")
        self.index = index
        self.value = value


@dataclass(frozen=True, eq=False)
class HamlingInput:
    measure: EffectMeasure
    R: np.ndarray
    V: np.ndarray
    p: float
    z: float

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        V = np.array(self.V, dtype=float)
        if R.ndim != 1 or R.shape != V.shape or R.size == 0:
            raise ValueError("R and V must be non-empty vectors of equal length")
        if not (np.all(R > 0) and np.all(np.isfinite(R))):
            raise ValueError("all ratios R must be positive and finite")
        if not (np.all(V > 0) and np.all(np.isfinite(V))):
            raise ValueError("all variances must be positive and finite")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        if not (self.z > 0 and math.isfinite(self.z)):
            raise ValueError("z must be positive")
        R.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "measure", EffectMeasure.parse(self.measure))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "z", float(self.z))

    @property
    def n(self) -> int:
        return self.R.size


def hamling_input(study: StudyInput) -> HamlingInput:
    if not study.has_hamling_fields:
        raise ValueError("Hamling needs p and z")
    return HamlingInput(study.measure, np.exp(study.L), study.V, study.p, study.z)


@dataclass(frozen=True)
class HamlingOptions:
    tol: float = 1e-10
    max_iter: int = 500
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    # fraction of the distance to the nearest denominator zero a step may cover
    boundary_fraction: float = 0.9
    # keep iterates inside the variance-compatible region
    safeguard: bool = True


# ---------------------------------------------------------------------------
# cells and residuals


def _sign(measure: EffectMeasure) -> float:
    # OR denominators subtract 1/b0, RR denominators add it
    return -1.0 if measure is EffectMeasure.OR else 1.0


def _denominators(a0: float, b0: float, inp: HamlingInput) -> np.ndarray:
    return inp.V - 1.0 / a0 + _sign(inp.measure) / b0


def _numerators(a0: float, b0: float, inp: HamlingInput) -> tuple[np.ndarray, np.ndarray]:
    ratio = a0 * inp.R / b0
    if inp.measure is EffectMeasure.OR:
        return 1.0 + ratio, 1.0 + 1.0 / ratio
    return 1.0 - ratio, 1.0 / ratio - 1.0


def _cells_unchecked(a0: float, b0: float, inp: HamlingInput) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    den = _denominators(a0, b0, inp)
    nA, nB = _numerators(a0, b0, inp)
    return nA / den, nB / den, den


def _check_denominators(den: np.ndarray) -> None:
    bad = np.flatnonzero(~(den > 0))
    if bad.size:
        i = int(bad[0])
        raise DenominatorNonPositive(i, float(den[i]))


def hamling_cells(a0: float, b0: float, inp: HamlingInput) -> tuple[np.ndarray, np.ndarray]:
    """Cells ``(A, B)`` matching the reported ratios and variances at ``(a0, b0)``."""
    A, B, den = _cells_unchecked(a0, b0, inp)
    _check_denominators(den)
    return A, B


def hamling_residual(a0: float, b0: float, inp: HamlingInput) -> tuple[float, float]:
    """``(f1, f2)``; both vanish exactly at a solution of the two-equation system."""
    A, B = hamling_cells(a0, b0, inp)
    return _raw_residual(a0, b0, A, B, inp)


def _raw_residual(a0, b0, A, B, inp):
    f1 = (1.0 - inp.p) / inp.p * b0 - B.sum()
    f2 = b0 / (inp.z * inp.p) - a0 - A.sum()
    return float(f1), float(f2)


def _scales(a0, b0, A, B, inp) -> np.ndarray:
    # sum of term magnitudes per equation: the residual divided by it is a relative error
    s1 = abs((1.0 - inp.p) / inp.p * b0) + np.abs(B).sum()
    s2 = abs(b0 / (inp.z * inp.p)) + abs(a0) + np.abs(A).sum()
    return np.array([s1, s2])


def _jacobian(a0: float, b0: float, inp: HamlingInput) -> np.ndarray:
    R = inp.R
    den = _denominators(a0, b0, inp)
    nA, nB = _numerators(a0, b0, inp)
    dden_a = 1.0 / a0**2
    dden_b = -_sign(inp.measure) / b0**2
    if inp.measure is EffectMeasure.OR:
        dnA_a, dnA_b = R / b0, -a0 * R / b0**2
        dnB_a, dnB_b = -b0 / (a0**2 * R), 1.0 / (a0 * R)
    else:
        dnA_a, dnA_b = -R / b0, a0 * R / b0**2
        dnB_a, dnB_b = -b0 / (a0**2 * R), 1.0 / (a0 * R)

    def quot(dn, dd, num):
        return (dn * den - num * dd) / den**2

    dA_a, dA_b = quot(dnA_a, dden_a, nA), quot(dnA_b, dden_b, nA)
    dB_a, dB_b = quot(dnB_a, dden_a, nB), quot(dnB_b, dden_b, nB)
    k1 = (1.0 - inp.p) / inp.p
    k2 = 1.0 / (inp.z * inp.p)
    return np.array([
        [-dB_a.sum(), k1 - dB_b.sum()],
        [-1.0 - dA_a.sum(), k2 - dA_b.sum()],
    ])


def implied_quantities(a0: float, b0: float, A: np.ndarray, B: np.ndarray,
                       measure: EffectMeasure) -> dict[str, Any]:
    """Ratios, variances, ``p`` and ``z`` implied by a full set of cells.

    For RR, ``B``/``b0`` are group totals and the variance uses the
    ``1/a - 1/b`` form.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    R = A * b0 / (a0 * B)
    s = -_sign(measure)
    V = 1.0 / a0 + s / b0 + 1.0 / A + s / B
    B_all = b0 + B.sum()
    return {"R": R, "V": V, "p": b0 / B_all, "z": B_all / (a0 + A.sum())}


# ---------------------------------------------------------------------------
# initialization and solver


def hamling_robust_init(inp: HamlingInput) -> tuple[float, float]:
    """Start at ``(10/V_min, 10/V_min)`` so every OR denominator is positive.

    For RR the same ``a0`` is used, with ``b0`` raised so that ``a0 R_i < b0``
    for every level (otherwise some case count starts negative).
    """
    a0 = 10.0 / float(inp.V.min())
    if inp.measure is EffectMeasure.OR:
        return a0, a0
    return a0, a0 * max(1.0, 2.0 * float(inp.R.max()))


def _feasible(a0: float, b0: float, inp: HamlingInput) -> bool:
    if not (a0 > 0 and b0 > 0 and math.isfinite(a0) and math.isfinite(b0)):
        return False
    if not np.all(_denominators(a0, b0, inp) > 0):
        return False
    if inp.measure is EffectMeasure.RR:
        # positive case counts need a0 R_i < b0, and then B_i > A_i follows
        return bool(np.all(a0 * inp.R < b0))
    return True


def _boundary_step_log(y: np.ndarray, dy: np.ndarray, feasible) -> float:
    """Step length along ``dy`` to the first infeasible point, ``inf`` if none up to 1."""
    ts = np.linspace(0.0, 1.0, 33)[1:]
    # the region may be left and re-entered along the segment, so sample it
    hi = next((t for t in ts if not feasible(y + t * dy)), None)
    if hi is None:
        return math.inf
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if feasible(y + mid * dy):
            lo = mid
        else:
            hi = mid
    return lo


def _newton_direction(J: np.ndarray, F: np.ndarray) -> np.ndarray:
    try:
        dx = np.linalg.solve(J, -F)
        if np.all(np.isfinite(dx)) and np.linalg.cond(J) < 1e14:
            return dx
    except np.linalg.LinAlgError:
        pass
    # Levenberg-regularized Gauss-Newton step
    JtJ = J.T @ J
    mu = 1e-8 * max(np.trace(JtJ), 1e-300)
    return np.linalg.solve(JtJ + mu * np.eye(2), -J.T @ F)


def _equivariant_diagnostics(inp: HamlingInput) -> dict[str, Any]:
    if not np.allclose(inp.V, inp.V[0], rtol=1e-12, atol=0):
        return {}
    summ = equivariant_summary(inp)
    return {"equivariant": summ.to_dict()}


def solve_hamling(inp: HamlingInput, opts: HamlingOptions | None = None,
                  init: tuple[float, float] | None = None) -> tuple[PseudoCounts, SolveReport]:
    """Solve the two-equation Hamling system for ``(a0, b0)``.

    Newton (Gauss-Newton on the square system) steps on the row-scaled
    residual with Armijo backtracking on its squared norm. With
    ``opts.safeguard`` (the default) a step that would make a variance
    denominator nonpositive is cut to ``boundary_fraction`` of the distance
    to that boundary, so iterates never leave the region where the cells
    are positive. Convergence: relative residual 2-norm ``<= opts.tol``.

    Raises :class:`InfeasibleError` for RR inputs that cannot be solved,
    :class:`DomainViolationError` if the start is outside the
    variance-compatible region or a candidate solution has nonpositive
    cells, and :class:`MaxIterationsError` otherwise.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve_hamling(inp, opts or HamlingOptions(), init)


def _solve_hamling(inp: HamlingInput, opts: HamlingOptions,
                   init: tuple[float, float] | None) -> tuple[PseudoCounts, SolveReport]:
    x0 = np.array(hamling_robust_init(inp) if init is None else init, dtype=float)
    if opts.safeguard and not _feasible(*x0, inp):
        report = SolveReport(0, math.nan, Termination.DOMAIN_VIOLATION,
                             message="initial (a0, b0) violates the variance-compatibility region",
                             diagnostics={"init": x0.tolist(),
                                          "denominators": _denominators(*x0, inp).tolist()})
        raise DomainViolationError(report.message, report)

    run = _newton(inp, opts, x0)
    iterations = run.iterations
    start = "robust" if init is None else "user"
    if not _valid(run, inp) and opts.safeguard and init is None:
        # Newton can stall against the region boundary, or (RR) reach a root
        # that is not a table; restart from every root of the 1-D profile
        for cand in _profile_candidates(inp):
            retry = _newton(inp, opts, cand)
            iterations += retry.iterations
            if _valid(retry, inp):
                run, start = retry, "profile"
                break

    a0, b0 = float(run.x[0]), float(run.x[1])
    A, B, den = _cells_unchecked(a0, b0, inp)
    F = list(_raw_residual(a0, b0, A, B, inp))
    trajectory = tuple(run.trajectory)
    final = trajectory[-1]
    diagnostics: dict[str, Any] = {
        "a0": a0, "b0": b0, "A": A.tolist(), "B": B.tolist(),
        "residual": F, "denominators": den.tolist(),
        "min_denominator_path": run.min_den_path, "start": start,
    }
    if run.termination is Termination.CONVERGED:
        counts = PseudoCounts(inp.measure, A, a0, B, b0)
        problems = _cell_problems(counts, den)
        if problems:
            diagnostics["violations"] = problems
            report = SolveReport(iterations, final, Termination.DOMAIN_VIOLATION, trajectory=trajectory,
                                 message="candidate solution rejected: " + "; ".join(problems),
                                 diagnostics=diagnostics)
            raise DomainViolationError(report.message, report)
        report = SolveReport(iterations, final, Termination.CONVERGED, trajectory=trajectory,
                             message="residual tolerance reached", diagnostics={"residual": F, "start": start})
        return counts, report

    diagnostics.update(_equivariant_diagnostics(inp))
    if inp.measure is EffectMeasure.RR and run.termination is Termination.MAX_ITERATIONS:
        message = (f"no solution found for the relative-risk Hamling equations ({run.message}); "
                   "check the inputs R, V, p, z or use the GL method")
        report = SolveReport(iterations, final, Termination.INFEASIBLE, trajectory=trajectory,
                             message=message, diagnostics=diagnostics)
        raise InfeasibleError(message, report)
    report = SolveReport(iterations, final, run.termination, trajectory=trajectory,
                         message=run.message or "solver stopped", diagnostics=diagnostics)
    if run.termination is Termination.DOMAIN_VIOLATION:
        raise DomainViolationError(report.message, report)
    raise MaxIterationsError(report.message, report)


@dataclass
class _Run:
    x: np.ndarray
    termination: Termination
    message: str
    trajectory: list[float]
    min_den_path: list[float]

    @property
    def iterations(self) -> int:
        return len(self.trajectory) - 1


def _newton(inp: HamlingInput, opts: HamlingOptions, x0: np.ndarray) -> _Run:
    """Damped Newton on the two equations, from ``x0``.

    Steps are taken in ``(log a0, log b0)`` on the residual divided by
    ``b0``, which makes both equations dimensionless and keeps the merit
    function fixed across iterations. Convergence is judged on the
    term-relative residual.
    """

    def evaluate(pt):
        A, B, den = _cells_unchecked(pt[0], pt[1], inp)
        return A, B, den, np.array(_raw_residual(pt[0], pt[1], A, B, inp))

    def feasible_log(yy):
        return _feasible(*np.exp(yy), inp) if opts.safeguard else bool(np.all(np.isfinite(np.exp(yy))))

    y = np.log(x0)
    trajectory: list[float] = []
    min_den_path: list[float] = []
    merits: list[float] = []
    for it in range(opts.max_iter + 1):
        x = np.exp(y)
        A, B, den, F = evaluate(x)
        rnorm = float(np.linalg.norm(F / _scales(x[0], x[1], A, B, inp)))
        trajectory.append(rnorm)
        min_den_path.append(float(den.min()))
        if not np.isfinite(rnorm):
            return _Run(x, Termination.DOMAIN_VIOLATION, "residual is not finite", trajectory, min_den_path)
        if rnorm <= opts.tol:
            return _Run(x, Termination.CONVERGED, "", trajectory, min_den_path)
        if it == opts.max_iter:
            break
        G = F / x[1]
        phi = 0.5 * float(G @ G)
        merits.append(phi)
        if len(merits) > _STALL_WINDOW and merits[-_STALL_WINDOW - 1] - phi <= 1e-12 * merits[-_STALL_WINDOW - 1]:
            return _Run(x, Termination.MAX_ITERATIONS, f"stalled at relative residual {rnorm:.3g}",
                        trajectory, min_den_path)
        Jx = _jacobian(x[0], x[1], inp)
        J = np.column_stack([Jx[:, 0] * x[0] / x[1], Jx[:, 1] - G])
        dy = _newton_direction(J, G)
        slope = float(G @ (J @ dy))  # directional derivative of phi
        if not slope < 0:
            dy = -J.T @ G
            slope = -float(dy @ dy)
        t = 1.0
        if opts.safeguard:
            t = min(1.0, opts.boundary_fraction * _boundary_step_log(y, dy, feasible_log))
        for _ in range(80):
            trial = y + t * dy
            if feasible_log(trial):
                xt = np.exp(trial)
                Gt = evaluate(xt)[3] / xt[1]
                phit = 0.5 * float(Gt @ Gt)
                if np.isfinite(phit) and phit <= phi + opts.armijo_c * t * slope:
                    break
            t *= opts.backtrack_factor
        else:
            return _Run(x, Termination.MAX_ITERATIONS, "line search could not reduce the residual",
                        trajectory, min_den_path)
        y = trial
    return _Run(np.exp(y), Termination.MAX_ITERATIONS,
                f"relative residual {trajectory[-1]:.3g} above {opts.tol:g} after {opts.max_iter} iterations",
                trajectory, min_den_path)


_STALL_WINDOW = 25


def _valid(run: _Run, inp: HamlingInput) -> bool:
    if run.termination is not Termination.CONVERGED:
        return False
    A, B, den = _cells_unchecked(*run.x, inp)
    return not _cell_problems(PseudoCounts(inp.measure, A, run.x[0], B, run.x[1]), den)


# ---------------------------------------------------------------------------
# one-dimensional profile
#
# With c = a0/b0, k = 1/c + s, alpha_i = 1 + s c R_i, beta_i = 1/(c R_i) + s
# (s = +1 for OR, -1 for RR) and w = k/b0 in (0, V_min), the two equations read
#
#     (1/k) sum w beta_i  / (V_i - w) = (1 - p)/p
#     (1/k) sum w alpha_i / (V_i - w) = 1/(z p) - c
#
# Each left side increases from 0 to infinity in w, so each has exactly one
# root w_1(c), w_2(c); solutions of the system are the zeros of w_1 - w_2.


def _c_upper(inp: HamlingInput) -> float:
    hi = 1.0 / (inp.z * inp.p)
    if inp.measure is EffectMeasure.RR:
        hi = min(hi, 1.0, 1.0 / float(inp.R.max()))
    return hi


def _profile_logits(c: np.ndarray, inp: HamlingInput, iters: int = 90) -> tuple[np.ndarray, np.ndarray]:
    """Roots of both equations as ``logit(w / V_min)``, for every ``c`` in the array."""
    s = _sign(inp.measure) * -1.0
    c = np.asarray(c, dtype=float)[:, None]
    R, V = inp.R[None, :], inp.V[None, :]
    vmin = float(inp.V.min())
    k = 1.0 / c + s
    alpha = 1.0 + s * c * R
    beta = 1.0 / (c * R) + s
    targets = ((1.0 - inp.p) / inp.p, 1.0 / (inp.z * inp.p) - c[:, 0])
    gap0 = V - vmin
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _bisect_logits(alpha, beta, k, targets, gap0, vmin, c.shape[0], iters)


def _bisect_logits(alpha, beta, k, targets, gap0, vmin, m, iters):
    out = []
    for coef, target in ((beta, targets[0]), (alpha, targets[1])):
        lo = np.full(m, -700.0)
        hi = np.full(m, 700.0)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            w = vmin * expit(mid)[:, None]
            gap = gap0 + vmin * expit(-mid)[:, None]
            val = np.sum(w * coef / gap, axis=1) / k[:, 0] - target
            up = val > 0
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
        out.append(0.5 * (lo + hi))
    return out[0], out[1]


def _profile_point(c: float, inp: HamlingInput) -> tuple[float, float]:
    x1, _ = _profile_logits(np.array([c]), inp)
    w = float(inp.V.min()) * float(expit(x1[0]))
    k = 1.0 / c - _sign(inp.measure)
    b0 = k / w
    return c * b0, b0


def _profile_candidates(inp: HamlingInput, grid: int = 400) -> list[np.ndarray]:
    c_hi = _c_upper(inp)
    ts = np.linspace(-40.0, 40.0, grid)
    cs = c_hi * expit(ts)
    x1, x2 = _profile_logits(cs, inp)
    g = x1 - x2
    found = []

    def diff(t):
        a, b = _profile_logits(np.array([c_hi * expit(t)]), inp)
        return float(a[0] - b[0])

    roots = []
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0):
        try:
            roots.append(optimize.brentq(diff, ts[i], ts[i + 1], xtol=1e-13))
        except ValueError:
            continue
    # a double root touches zero without a sign change; try each local extremum
    dg = np.diff(g)
    for i in np.flatnonzero(dg[:-1] * dg[1:] < 0) + 1:
        res = optimize.minimize_scalar(lambda t: diff(t) ** 2, bounds=(ts[i - 1], ts[i + 1]),
                                       method="bounded", options={"xatol": 1e-12})
        roots.append(float(res.x))
    for t in roots:
        a0, b0 = _profile_point(c_hi * float(expit(t)), inp)
        if np.isfinite(a0) and np.isfinite(b0) and a0 > 0 and b0 > 0:
            found.append(np.array([a0, b0]))
    return found


def _cell_problems(counts: PseudoCounts, den: np.ndarray) -> list[str]:
    problems = []
    for name, vals in (("A", counts.A), ("B", counts.B)):
        for i in np.flatnonzero(~(vals > 0)):
            problems.append(f"{name}[{i}] = {vals[i]:.6g} is not positive")
    for name in ("a0", "b0"):
        v = getattr(counts, name)
        if not v > 0:
            problems.append(f"{name} = {v:.6g} is not positive")
    for i in np.flatnonzero(~(den > 0)):
        problems.append(f"denominator {i} = {den[i]:.6g} is not positive")
    if counts.measure is EffectMeasure.RR and not problems:
        if not counts.b0 > counts.a0:
            problems.append("reference total b0 does not exceed reference cases a0")
        for i in np.flatnonzero(~(counts.B > counts.A)):
            problems.append(f"B[{i}] does not exceed A[{i}]")
    return problems


# ---------------------------------------------------------------------------
# equal-variance closed forms


@dataclass(frozen=True)
class EquivariantSummary:
    measure: EffectMeasure
    n: int
    p: float
    z: float
    r1: float
    r2: float
    v: float | None
    D: float
    c: float | None = None
    a0: float | None = None
    b0: float | None = None
    feasible: bool = True
    conditions: dict[str, bool] = field(default_factory=dict)
    reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "measure": self.measure.value, "n": self.n, "p": self.p, "z": self.z,
            "r1": self.r1, "r2": self.r2, "v": self.v, "D": self.D, "c": self.c,
            "a0": self.a0, "b0": self.b0, "feasible": self.feasible,
            "conditions": dict(self.conditions), "reason": self.reason,
        }


def _check_tuple(n, p, z, r1, r2, v):
    if not (int(n) == n and n >= 1):
        raise ValueError("n must be a positive integer")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    for name, val in (("z", z), ("r1", r1), ("r2", r2)):
        if not (val > 0 and math.isfinite(val)):
            raise ValueError(f"{name} must be positive")
    if v is not None and not v > 0:
        raise ValueError("v must be positive")


def equivariant_or(n: int, p: float, z: float, r1: float, r2: float, v: float) -> EquivariantSummary:
    """Closed-form OR solution when every reported variance equals ``v``.

    ``c = a0/b0`` solves ``z(np + (1-p) r2) c^2 + (n(z - pz - 1) + p r1 z) c - r1 = 0``;
    the product of the roots is negative so exactly one is positive.
    """
    _check_tuple(n, p, z, r1, r2, v)
    if r1 * r2 < n * n * (1 - 1e-12):
        raise ValueError("r1 * r2 must be at least n^2 for a set of positive ratios")
    qa = z * (n * p + (1.0 - p) * r2)
    qb = n * (z - p * z - 1.0) + p * r1 * z
    D = qb * qb + 4.0 * qa * r1
    c = (-qb + math.sqrt(D)) / (2.0 * qa)
    b0 = (p / (1.0 - p) * (n + r1 / c) + 1.0 + 1.0 / c) / v
    return EquivariantSummary(EffectMeasure.OR, int(n), p, z, r1, r2, v, D, c=c, a0=c * b0, b0=b0)


def _rr_conditions(p: float, z: float, r2: float) -> dict[str, bool]:
    q = 1.0 - p
    return {
        "(1-p)z >= 1": q * z >= 1.0,
        "(1-p)z >= 4 r2 ((1-p)/p)^2": q * z >= 4.0 * r2 * (q / p) ** 2,
    }


def equivariant_rr(n: int, p: float, z: float, r1: float, r2: float, v: float | None = None,
                   R: np.ndarray | None = None) -> EquivariantSummary:
    """Closed-form RR analysis when every reported variance equals ``v``.

    ``c = a0/b0`` solves ``z(np + (1-p) r2) c^2 - (n(1 + z - pz) + p r1 z) c + r1 = 0``.
    A negative discriminant means no solution exists. Otherwise both roots
    are tried; a root is kept when ``0 < c < 1`` and, given ``v`` (and the
    individual ratios ``R`` if known), every cell is positive with
    ``B_i > A_i`` and the system residual vanishes.
    """
    _check_tuple(n, p, z, r1, r2, v)
    qa = z * (n * p + (1.0 - p) * r2)
    qb = n * (1.0 + z - p * z) + p * r1 * z
    D = qb * qb - 4.0 * qa * r1
    conditions = _rr_conditions(p, z, r2)
    base = dict(measure=EffectMeasure.RR, n=int(n), p=p, z=z, r1=r1, r2=r2, v=v, D=D, conditions=conditions)
    if D < 0:
        return EquivariantSummary(**base, feasible=False,
                                  reason=f"negative discriminant D = {D:.4g}: the equations have no real solution")
    sq = math.sqrt(D)
    reasons = []
    for c in ((qb - sq) / (2.0 * qa), (qb + sq) / (2.0 * qa)):
        if not 0.0 < c < 1.0:
            reasons.append(f"root c = {c:.6g} outside (0, 1)")
            continue
        if v is None:
            return EquivariantSummary(**base, c=c)
        b0 = (p / (1.0 - p) * (r1 / c - n) + 1.0 / c - 1.0) / v
        a0 = c * b0
        if not (b0 > 0 and a0 > 0):
            reasons.append(f"root c = {c:.6g} gives nonpositive reference cells")
            continue
        if R is not None:
            inp = HamlingInput(EffectMeasure.RR, R, np.full(len(R), v), p, z)
            A, B, den = _cells_unchecked(a0, b0, inp)
            counts = PseudoCounts(EffectMeasure.RR, A, a0, B, b0)
            problems = _cell_problems(counts, den)
            if problems:
                reasons.append(f"root c = {c:.6g} is degenerate: " + "; ".join(problems))
                continue
            F = np.array(_raw_residual(a0, b0, A, B, inp)) / _scales(a0, b0, A, B, inp)
            if np.linalg.norm(F) > 1e-10:
                reasons.append(f"root c = {c:.6g} fails substitution (residual {np.linalg.norm(F):.3g})")
                continue
        return EquivariantSummary(**base, c=c, a0=a0, b0=b0)
    return EquivariantSummary(**base, feasible=False, reason="no feasible root: " + "; ".join(reasons))


def equivariant_summary(inp: HamlingInput) -> EquivariantSummary:
    """Closed-form analysis of an input whose variances are all equal."""
    if not np.allclose(inp.V, inp.V[0], rtol=1e-12, atol=0):
        raise ValueError("variances are not all equal")
    r1 = float(np.sum(1.0 / inp.R))
    r2 = float(np.sum(inp.R))
    v = float(inp.V[0])
    if inp.measure is EffectMeasure.OR:
        return equivariant_or(inp.n, inp.p, inp.z, r1, r2, v)
    return equivariant_rr(inp.n, inp.p, inp.z, r1, r2, v, R=inp.R)


def classic_pz_residual(a0: float, b0: float, inp: HamlingInput) -> float:
    """Relative squared mismatch of ``p' = b0/sum(B)`` and ``z' = sum(B)/sum(A)``.

    This is the score minimized by the original spreadsheet procedure; it
    can be used to grade any candidate ``(a0, b0)``.
    """
    A, B = hamling_cells(a0, b0, inp)
    controls = b0 + B.sum()
    p_hat = b0 / controls
    z_hat = controls / (a0 + A.sum())
    return float(((inp.p - p_hat) / inp.p) ** 2 + ((inp.z - z_hat) / inp.z) ** 2)
