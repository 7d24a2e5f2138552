"""Solves with matrices of the form ``diag(d) + s * 1 1^T``."""
from __future__ import annotations

import numpy as np


def solve_diag_plus_ones(d: np.ndarray, s: float, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(diag(d) + s 11^T) x = rhs`` by Sherman-Morrison.

    Requires ``d > 0`` and ``s >= 0`` (the matrix is then SPD). Falls back
    to a dense solve if the correction denominator is not safely positive.
    """
    d = np.asarray(d, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    u = rhs / d
    w = 1.0 / d
    denom = 1.0 + s * w.sum()
    if not np.isfinite(denom) or denom <= 1e-14:
        return np.linalg.solve(np.diag(d) + s, rhs)
    return u - w * (s * u.sum() / denom)


def diag_plus_ones(d: np.ndarray, s: float) -> np.ndarray:
    return np.diag(np.asarray(d, dtype=float)) + s
