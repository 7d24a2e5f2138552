"""Within-study correlation and covariance matrices from pseudo-counts.

Two log ratios that share a reference group are correlated because both
carry the sampling noise of that group. With cells ``(A_i, B_i)`` per level
and ``(a0, b0)`` for the reference::

    OR:  r_ij = (1/a0 + 1/b0) / sqrt(s_i s_j),   s_k = 1/a0 + 1/b0 + 1/A_k + 1/B_k
    RR:  r_ij = (1/a0 - 1/b0) / sqrt(s_i s_j),   s_k = 1/a0 - 1/b0 + 1/A_k - 1/B_k

where for RR ``B`` and ``b0`` are group totals. The covariance matrix keeps
the reported variances on its diagonal and uses ``C_ij = r_ij sqrt(V_i V_j)``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import EffectMeasure, PseudoCounts

__all__ = [
    "NonPositiveRadicand",
    "WithinStudyCovariance",
    "pairwise_correlation",
    "correlation_matrix",
    "covariance_matrix",
]


class NonPositiveRadicand(ValueError):
    """A per-level variance term under the square root is not positive."""

    def __init__(self, index: int, value: float):
        super().__init__(f"variance term for level {index} is {value:.6g}; counts cannot give a correlation")
        self.index = index
        self.value = value


def _shared_and_levels(counts: PseudoCounts) -> tuple[float, np.ndarray]:
    if counts.measure is EffectMeasure.OR:
        shared = 1.0 / counts.a0 + 1.0 / counts.b0
        return shared, shared + 1.0 / counts.A + 1.0 / counts.B
    shared = 1.0 / counts.a0 - 1.0 / counts.b0
    return shared, shared + 1.0 / counts.A - 1.0 / counts.B


def _check_counts(counts: PseudoCounts) -> None:
    if not counts.all_positive():
        raise ValueError("pseudo-counts must be strictly positive")


def pairwise_correlation(counts: PseudoCounts, i: int, j: int) -> float:
    """Correlation between the log estimates of levels ``i`` and ``j`` (0-based)."""
    n = counts.A.size
    for k in (i, j):
        if not -n <= k < n:
            raise IndexError(f"level {k} out of range for {n} levels")
    if i % n == j % n:
        raise ValueError("i and j must differ")
    _check_counts(counts)
    shared, s = _shared_and_levels(counts)
    for k in (i, j):
        if not s[k] > 0:
            raise NonPositiveRadicand(k % n, float(s[k]))
    return float(shared / np.sqrt(s[i] * s[j]))


def correlation_matrix(counts: PseudoCounts) -> np.ndarray:
    _check_counts(counts)
    shared, s = _shared_and_levels(counts)
    bad = np.flatnonzero(~(s > 0))
    if bad.size:
        raise NonPositiveRadicand(int(bad[0]), float(s[bad[0]]))
    root = np.sqrt(s)
    r = shared / np.outer(root, root)
    np.fill_diagonal(r, 1.0)
    return r


@dataclass(frozen=True, eq=False)
class WithinStudyCovariance:
    """Covariance of the non-reference log estimates.

    ``min_eigenvalue`` is reported, not enforced: GL-based matrices are not
    guaranteed positive semidefinite.
    """

    matrix: np.ndarray
    correlations: np.ndarray
    min_eigenvalue: float
    labels: tuple[str, ...] = ()

    @property
    def is_psd(self) -> bool:
        return self.min_eigenvalue >= -1e-12 * float(np.max(np.abs(np.diag(self.matrix))))

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "matrix": self.matrix.tolist(),
            "correlations": self.correlations.tolist(),
            "min_eigenvalue": self.min_eigenvalue,
        }

    def to_json(self, digits: int | None = None) -> str:
        d = self.to_dict()
        if digits is not None:
            d["matrix"] = [[_sig(x, digits) for x in row] for row in d["matrix"]]
            d["correlations"] = [[_sig(x, digits) for x in row] for row in d["correlations"]]
            d["min_eigenvalue"] = _sig(d["min_eigenvalue"], digits)
        return json.dumps(d, indent=2)

    def to_csv(self, digits: int | None = None) -> str:
        labels = self.labels or tuple(str(k + 1) for k in range(self.matrix.shape[0]))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(labels)
        for row in self.matrix:
            w.writerow([repr(float(x)) if digits is None else repr(_sig(x, digits)) for x in row])
        return buf.getvalue()


def _sig(x: float, digits: int) -> float:
    return float(f"{x:.{digits}g}")


def covariance_matrix(counts: PseudoCounts, V: Sequence[float],
                      labels: Sequence[str] | None = None) -> WithinStudyCovariance:
    """Assemble ``C`` with the reported ``V`` on the diagonal."""
    V = np.asarray(V, dtype=float)
    if V.shape != counts.A.shape:
        raise ValueError(f"V has {V.size} entries but counts have {counts.A.size} levels")
    if not np.all(V > 0):
        raise ValueError("variances must be positive")
    r = correlation_matrix(counts)
    sd = np.sqrt(V)
    C = r * np.outer(sd, sd)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, V)
    for a in (C, r):
        a.setflags(write=False)
    min_eig = float(np.linalg.eigvalsh(C)[0])
    return WithinStudyCovariance(C, r, min_eig, tuple(labels) if labels is not None else ())
