"""Study metadata, pseudo-count containers and solver diagnostics.

Every type here is immutable. Vectors are stored as tuples on
:class:`StudyInput` (so instances compare and hash by value) and as
read-only float arrays on :class:`PseudoCounts`.
"""
from __future__ import annotations

import csv
import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


class EffectMeasure(str, enum.Enum):
    """Scale of the reported estimates."""

    OR = "or"
    RR = "rr"

    @classmethod
    def parse(cls, value: "EffectMeasure | str") -> "EffectMeasure":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"or": cls.OR, "odds_ratio": cls.OR, "oddsratio": cls.OR,
                   "rr": cls.RR, "relative_risk": cls.RR, "relativerisk": cls.RR}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown effect measure {value!r}; expected 'or' or 'rr'") from None


class Termination(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"
    DOMAIN_VIOLATION = "DomainViolation"


# ---------------------------------------------------------------------------
# errors


@dataclass(frozen=True)
class Issue:
    """One violated input invariant."""

    kind: str
    message: str
    index: int | None = None

    def __str__(self) -> str:
        where = f" (index {self.index})" if self.index is not None else ""
        return f"{self.kind}{where}: {self.message}"


class ValidationError(ValueError):
    """Raised by :func:`validate_study`; ``issues`` lists every violation found."""

    def __init__(self, issues: Sequence[Issue]):
        self.issues = tuple(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    @property
    def kinds(self) -> set[str]:
        return {i.kind for i in self.issues}


class SolveFailed(RuntimeError):
    """Base class for solver failures. Carries the :class:`SolveReport`."""

    termination = Termination.MAX_ITERATIONS

    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


class MaxIterationsError(SolveFailed):
    termination = Termination.MAX_ITERATIONS


class InfeasibleError(SolveFailed):
    termination = Termination.INFEASIBLE


class DomainViolationError(SolveFailed):
    termination = Termination.DOMAIN_VIOLATION


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class StudyInput:
    """Reported metadata for one study.

    ``group_totals`` holds the reference group first, then the ``n``
    alternative exposure groups. ``exposures`` are the alternative-level
    midpoints; the reference level sits at ``reference_exposure``.
    """

    measure: EffectMeasure
    log_estimates: tuple[float, ...]
    variances: tuple[float, ...]
    exposures: tuple[float, ...] | None = None
    group_totals: tuple[float, ...] | None = None
    total_cases: float | None = None
    p: float | None = None
    z: float | None = None
    reference_exposure: float = 0.0

    @property
    def n(self) -> int:
        return len(self.log_estimates)

    @property
    def L(self) -> np.ndarray:
        return np.asarray(self.log_estimates, dtype=float)

    @property
    def V(self) -> np.ndarray:
        return np.asarray(self.variances, dtype=float)

    @property
    def N(self) -> np.ndarray:
        if self.group_totals is None:
            raise ValueError("study has no group totals")
        return np.asarray(self.group_totals, dtype=float)

    @property
    def n0(self) -> float:
        return float(self.N[0])

    @property
    def N_plus(self) -> np.ndarray:
        return self.N[1:]

    @property
    def M1(self) -> float:
        if self.total_cases is None:
            raise ValueError("study has no total case count")
        return float(self.total_cases)

    @property
    def has_gl_fields(self) -> bool:
        return self.group_totals is not None and self.total_cases is not None

    @property
    def has_hamling_fields(self) -> bool:
        return self.p is not None and self.z is not None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "measure": self.measure.value,
            "log_estimates": list(self.log_estimates),
            "variances": list(self.variances),
        }
        if self.exposures is not None:
            out["exposures"] = list(self.exposures)
        if self.reference_exposure != 0.0:
            out["reference_exposure"] = self.reference_exposure
        if self.group_totals is not None:
            out["group_totals"] = list(self.group_totals)
        for key in ("total_cases", "p", "z"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def _readonly(values: Iterable[float]) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PseudoCounts:
    """Reconstructed cells.

    OR: ``A``/``a0`` are cases and ``B``/``b0`` non-cases. RR: ``A``/``a0``
    are cases and ``B``/``b0`` group totals.
    """

    measure: EffectMeasure
    A: np.ndarray
    a0: float
    B: np.ndarray
    b0: float

    def __post_init__(self):
        object.__setattr__(self, "A", _readonly(self.A))
        object.__setattr__(self, "B", _readonly(self.B))
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "b0", float(self.b0))
        if self.A.shape != self.B.shape or self.A.ndim != 1:
            raise ValueError("A and B must be vectors of equal length")

    @property
    def n(self) -> int:
        return self.A.size

    def all_positive(self) -> bool:
        return bool(self.a0 > 0 and self.b0 > 0 and np.all(self.A > 0) and np.all(self.B > 0))

    def scaled(self, k: float) -> "PseudoCounts":
        return PseudoCounts(self.measure, self.A * k, self.a0 * k, self.B * k, self.b0 * k)

    def log_estimates(self) -> np.ndarray:
        """Plug-in log OR / log RR implied by the cells."""
        return np.log(self.A * self.b0 / (self.a0 * self.B))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PseudoCounts):
            return NotImplemented
        return (self.measure == other.measure and self.a0 == other.a0 and self.b0 == other.b0
                and np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B))

    def to_dict(self) -> dict[str, Any]:
        return {"measure": self.measure.value, "a0": self.a0, "b0": self.b0,
                "A": self.A.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], measure: EffectMeasure | str | None = None) -> "PseudoCounts":
        m = EffectMeasure.parse(measure if measure is not None else doc.get("measure", "or"))
        return cls(m, doc["A"], doc["a0"], doc["B"], doc["b0"])


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual_norm: float
    termination: Termination
    final_objective: float | None = None
    trajectory: tuple[float, ...] = ()
    message: str = ""
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    def to_dict(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "final_residual_norm": self.final_residual_norm,
            "final_objective": self.final_objective,
            "termination": self.termination.value,
            "message": self.message,
            "diagnostics": dict(self.diagnostics),
        }


# ---------------------------------------------------------------------------
# validation

_METHODS = {"gl", "hamling"}


def _as_tuple(value: Any) -> tuple[float, ...]:
    if isinstance(value, (str, bytes)) or not isinstance(value, Iterable):
        raise TypeError
    return tuple(float(v) for v in value)


def _opt_float(value: Any) -> float | None:
    return None if value is None else float(value)


def validate_study(raw: StudyInput | Mapping[str, Any], method: str | None = None,
                   *, standard_errors: bool = False) -> StudyInput:
    """Check a candidate study and return a :class:`StudyInput`.

    ``raw`` may be a mapping in the canonical JSON layout or an existing
    :class:`StudyInput`. With ``method="gl"`` the group totals and total
    cases are required; with ``method="hamling"`` ``p`` and ``z`` are.
    When ``standard_errors`` is true the ``variances`` entries are read as
    standard errors and squared.

    Raises :class:`ValidationError` listing every problem found.
    """
    if method is not None and method not in _METHODS:
        raise ValueError(f"unknown method {method!r}")
    doc = raw.to_dict() if isinstance(raw, StudyInput) else dict(raw)
    issues: list[Issue] = []

    def vector(key: str, required: bool) -> tuple[float, ...] | None:
        if doc.get(key) is None:
            if required:
                issues.append(Issue("MissingRequiredField", f"'{key}' is required"))
            return None
        try:
            return _as_tuple(doc[key])
        except (TypeError, ValueError):
            issues.append(Issue("InvalidField", f"'{key}' must be an array of numbers"))
            return None

    def scalar(key: str) -> float | None:
        try:
            return _opt_float(doc.get(key))
        except (TypeError, ValueError):
            issues.append(Issue("InvalidField", f"'{key}' must be a number"))
            return None

    measure = None
    try:
        measure = EffectMeasure.parse(doc.get("measure", ""))
    except ValueError as exc:
        issues.append(Issue("InvalidField", str(exc)))

    L = vector("log_estimates", True)
    V = vector("variances", True)
    x = vector("exposures", False)
    N = vector("group_totals", False)
    M1 = scalar("total_cases")
    p = scalar("p")
    z = scalar("z")
    try:
        ref = float(doc.get("reference_exposure", 0.0) or 0.0)
    except (TypeError, ValueError):
        issues.append(Issue("InvalidField", "'reference_exposure' must be a number"))
        ref = 0.0

    if V is not None and standard_errors:
        # non-positive errors keep their sign so the variance check below reports them
        V = tuple(v * v if v > 0 else v for v in V)

    if L is not None:
        if len(L) < 1:
            issues.append(Issue("LengthMismatch", "at least one non-reference estimate is required"))
        for i, v in enumerate(L):
            if not math.isfinite(v):
                issues.append(Issue("NonFiniteEstimate", f"log estimate {v!r} is not finite", i))
        n = len(L)
        if V is not None and len(V) != n:
            issues.append(Issue("LengthMismatch", f"{len(V)} variances for {n} estimates"))
        if x is not None and len(x) != n:
            issues.append(Issue("LengthMismatch", f"{len(x)} exposures for {n} estimates"))
        if N is not None and len(N) != n + 1:
            issues.append(Issue("LengthMismatch", f"{len(N)} group totals, expected {n + 1}"))
    if V is not None:
        for i, v in enumerate(V):
            if not (math.isfinite(v) and v > 0):
                issues.append(Issue("NonPositiveVariance", f"variance {v!r} must be positive and finite", i))
    if x is not None:
        for i, v in enumerate(x):
            if not math.isfinite(v):
                issues.append(Issue("InvalidField", f"exposure {v!r} is not finite", i))
    if N is not None:
        for i, v in enumerate(N):
            if not (math.isfinite(v) and v > 0):
                issues.append(Issue("NonPositiveCount", f"group total {v!r} must be positive", i))
    if M1 is not None and not (math.isfinite(M1) and M1 > 0):
        issues.append(Issue("NonPositiveCount", f"total cases {M1!r} must be positive"))
    if method == "gl" and N is None:
        issues.append(Issue("MissingRequiredField", "GL requires 'group_totals'"))
    if method == "gl" and M1 is None:
        issues.append(Issue("MissingRequiredField", "GL requires 'total_cases'"))
    if (measure is EffectMeasure.OR and N is not None and M1 is not None
            and math.isfinite(M1) and M1 >= sum(N)):
        issues.append(Issue("CasesExceedSubjects", f"total cases {M1} must be below total subjects {sum(N)}"))
    if method == "hamling":
        for key, val in (("p", p), ("z", z)):
            if val is None:
                issues.append(Issue("MissingRequiredField", f"Hamling requires '{key}'"))
    if p is not None and not (0.0 < p < 1.0):
        issues.append(Issue("InvalidRatio", f"p = {p!r} must lie in (0, 1)"))
    if z is not None and not (math.isfinite(z) and z > 0):
        issues.append(Issue("InvalidRatio", f"z = {z!r} must be positive"))

    if issues:
        raise ValidationError(issues)

    if measure is EffectMeasure.RR and z is not None and z < 1.0:
        warnings.warn(f"z = {z} < 1: total subjects below total cases is impossible for risk data",
                      stacklevel=2)
    if measure is EffectMeasure.RR and N is not None and M1 is not None and M1 >= sum(N):
        warnings.warn("total cases exceed total subjects", stacklevel=2)

    return StudyInput(measure=measure, log_estimates=L, variances=V, exposures=x,
                      group_totals=N, total_cases=M1, p=p, z=z, reference_exposure=ref)


# ---------------------------------------------------------------------------
# serialization


def study_to_json(study: StudyInput) -> str:
    return json.dumps(study.to_dict(), indent=2)


def study_from_json(text: str, method: str | None = None) -> StudyInput:
    return validate_study(json.loads(text), method)


def read_study_csv(path: str | Path, measure: EffectMeasure | str, *, total_cases: float | None = None,
                   p: float | None = None, z: float | None = None, standard_errors: bool = False,
                   method: str | None = None) -> StudyInput:
    """Import ``exposure,estimate,variance,subjects`` rows.

    The first data row is the reference group; its estimate and variance
    cells are ignored (usually left empty). The ``subjects`` column is
    optional; when present on every row it becomes ``group_totals``.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if any((v or "").strip() for v in r.values())]
    if len(rows) < 2:
        raise ValidationError([Issue("LengthMismatch", "need a reference row and at least one exposure row")])
    ref, rest = rows[0], rows[1:]

    def cell(row: Mapping[str, str], key: str) -> str:
        return (row.get(key) or "").strip()

    doc: dict[str, Any] = {"measure": EffectMeasure.parse(measure).value}
    try:
        doc["log_estimates"] = [float(cell(r, "estimate")) for r in rest]
        doc["variances"] = [float(cell(r, "variance")) for r in rest]
        if all(cell(r, "exposure") for r in rows):
            doc["exposures"] = [float(cell(r, "exposure")) for r in rest]
            doc["reference_exposure"] = float(cell(ref, "exposure"))
        if all(cell(r, "subjects") for r in rows):
            doc["group_totals"] = [float(cell(r, "subjects")) for r in rows]
    except ValueError as exc:
        raise ValidationError([Issue("InvalidField", f"unparseable CSV cell: {exc}")]) from None
    doc["total_cases"] = total_cases
    doc["p"] = p
    doc["z"] = z
    return validate_study(doc, method, standard_errors=standard_errors)


def load_study(path: str | Path, method: str | None = None, **csv_kwargs: Any) -> StudyInput:
    """Read a study document; ``.csv`` files go through :func:`read_study_csv`."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        if "measure" not in csv_kwargs or csv_kwargs["measure"] is None:
            raise ValidationError([Issue("MissingRequiredField", "CSV input needs an explicit measure")])
        return read_study_csv(path, method=method, **csv_kwargs)
    doc = json.loads(path.read_text())
    for key in ("total_cases", "p", "z"):
        if csv_kwargs.get(key) is not None:
            doc[key] = csv_kwargs[key]
    if csv_kwargs.get("measure") is not None:
        doc["measure"] = EffectMeasure.parse(csv_kwargs["measure"]).value
    return validate_study(doc, method, standard_errors=bool(csv_kwargs.get("standard_errors", False)))
