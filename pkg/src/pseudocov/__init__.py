"""Pseudo-count and within-study covariance reconstruction for dose-response summaries.

Two estimators reconstruct 2 x (n+1) tables from reported log odds ratios or
log relative risks: the GL method (a strictly convex entropic minimization
solved by damped Newton) and the Hamling method (two nonlinear equations in
the reference cells). The counts give within-study correlations, a
covariance matrix with the reported variances on its diagonal, and a GLS
dose-response slope.
"""
from .covariance import NonPositiveRadicand, WithinStudyCovariance, covariance_matrix, pairwise_correlation
from .gl import GlOptions, gl_gradient, gl_hessian, gl_objective, solve_gl_classic, solve_gl_convex
from .hamling import (
    EquivariantSummary,
    HamlingInput,
    HamlingOptions,
    classic_pz_residual,
    equivariant_or,
    equivariant_rr,
    hamling_cells,
    hamling_input,
    hamling_residual,
    hamling_robust_init,
    solve_hamling,
)
from .model import (
    DomainViolationError,
    EffectMeasure,
    InfeasibleError,
    MaxIterationsError,
    PseudoCounts,
    SolveFailed,
    SolveReport,
    StudyInput,
    Termination,
    ValidationError,
    load_study,
    validate_study,
)
from .sim import SimConfig, SimSummary, run_trend_simulation
from .trend import SingularMatrixError, TrendFit, design_matrix, gls_fit, ols_fit, wls_fit

__version__ = "0.1.0"
