"""Dose-response slope fits: GLS with a full covariance, WLS and OLS."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

__all__ = ["SingularMatrixError", "TrendFit", "design_matrix", "gls_fit", "wls_fit", "ols_fit"]

_PIVOT_RTOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class TrendFit:
    """``coef`` and ``cov`` hold the full fit; ``beta``/``variance`` the slope."""

    coef: np.ndarray
    cov: np.ndarray
    method: str
    slope_index: int = 0

    @property
    def beta(self) -> float:
        return float(self.coef[self.slope_index])

    @property
    def variance(self) -> float:
        return float(self.cov[self.slope_index, self.slope_index])

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance))

    def to_dict(self) -> dict:
        return {"method": self.method, "beta": self.beta, "variance": self.variance,
                "coef": self.coef.tolist(), "cov": self.cov.tolist()}


def design_matrix(exposures: Sequence[float], reference: float = 0.0, intercept: bool = False) -> np.ndarray:
    """Exposure differences from the reference as a column; optional leading intercept."""
    x = np.asarray(exposures, dtype=float) - reference
    if intercept:
        return np.column_stack([np.ones_like(x), x])
    return x[:, None]


def _cholesky(M: np.ndarray, what: str) -> np.ndarray:
    M = 0.5 * (M + M.T)
    try:
        L = linalg.cholesky(M, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularMatrixError(f"{what} is not positive definite") from exc
    piv = np.diag(L) ** 2
    if piv.min() <= _PIVOT_RTOL * np.abs(np.diag(M)).max():
        raise SingularMatrixError(f"{what} is numerically singular")
    return L


def _as_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def gls_fit(X, eta, C, method: str = "GLS") -> TrendFit:
    """``beta = (X' C^-1 X)^-1 X' C^-1 eta`` with covariance ``(X' C^-1 X)^-1``."""
    X = _as_design(X)
    eta = np.asarray(eta, dtype=float)
    C = np.asarray(C, dtype=float)
    n = eta.size
    if X.shape[0] != n or C.shape != (n, n):
        raise ValueError("X, eta and C dimensions disagree")
    Lc = _cholesky(C, "covariance matrix")
    # whiten: solve L y = eta, L Z = X
    Z = linalg.solve_triangular(Lc, X, lower=True)
    y = linalg.solve_triangular(Lc, eta, lower=True)
    F = Z.T @ Z
    Lf = _cholesky(F, "information matrix X' C^-1 X")
    cov = linalg.cho_solve((Lf, True), np.eye(F.shape[0]))
    coef = cov @ (Z.T @ y)
    slope = X.shape[1] - 1  # an intercept, when present, comes first
    return TrendFit(coef, 0.5 * (cov + cov.T), method, slope)


def wls_fit(X, eta, V) -> TrendFit:
    V = np.asarray(V, dtype=float)
    if not np.all(V > 0):
        raise ValueError("variances must be positive")
    return gls_fit(X, eta, np.diag(V), method="WLS")


def ols_fit(X, eta) -> TrendFit:
    """Unit-variance fit; ``variance`` is then the unscaled ``(X'X)^-1``."""
    n = np.asarray(eta).size
    return gls_fit(X, eta, np.eye(n), method="OLS")
