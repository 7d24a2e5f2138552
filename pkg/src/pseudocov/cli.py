"""Command-line interface.

Exit status: 0 on success, 1 for unreadable or invalid input, 2 when a
solver fails or a study is shown to be unsolvable (a diagnostic is printed
to stderr).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .covariance import NonPositiveRadicand, covariance_matrix
from .gl import GlOptions, InfeasiblePointError, solve_gl_classic, solve_gl_convex
from .hamling import (
    HamlingOptions,
    equivariant_or,
    equivariant_rr,
    equivariant_summary,
    hamling_input,
    solve_hamling,
)
from .model import EffectMeasure, PseudoCounts, SolveFailed, StudyInput, ValidationError, load_study
from .sim import SimConfig, histogram, run_trend_simulation, write_samples_csv
from .trend import SingularMatrixError, design_matrix, gls_fit, ols_fit, wls_fit

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2

DIGITS = 10


class InputError(Exception):
    pass


def _round(obj: Any) -> Any:
    """Round every float to ``DIGITS`` significant digits."""
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if not math.isfinite(x) else float(f"{x:.{DIGITS}g}")
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dumps(doc: Any) -> str:
    return json.dumps(_round(doc), indent=2) + "\n"


def _fmt(x: float) -> str:
    return repr(float(f"{float(x):.{DIGITS}g}"))


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None


def _study(args, method: str | None) -> StudyInput:
    try:
        return load_study(args.input, method, measure=args.measure, total_cases=args.total_cases,
                          p=args.p, z=args.z, standard_errors=args.standard_errors)
    except OSError as exc:
        raise InputError(f"cannot read {args.input}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.input} is not valid JSON: {exc}") from None


def _counts_csv(counts: PseudoCounts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "A", "B"])
    w.writerow([0, _fmt(counts.a0), _fmt(counts.b0)])
    for i, (a, b) in enumerate(zip(counts.A, counts.B), start=1):
        w.writerow([i, _fmt(a), _fmt(b)])
    return buf.getvalue()


def _emit_counts(counts: PseudoCounts, report, args) -> None:
    if args.format == "csv":
        _emit(_counts_csv(counts), args.output)
    else:
        doc = counts.to_dict()
        doc["report"] = report.to_dict()
        _emit(_dumps(doc), args.output)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gl(args) -> int:
    study = _study(args, "gl")
    opts = GlOptions(**{k: v for k, v in (("tol_grad", args.tol), ("max_iter", args.max_iter)) if v is not None})
    solver = solve_gl_classic if args.solver == "classic" else solve_gl_convex
    counts, report = solver(study, opts)
    _emit_counts(counts, report, args)
    return EXIT_OK


def cmd_hamling(args) -> int:
    study = _study(args, "hamling")
    opts = HamlingOptions(**{k: v for k, v in (("tol", args.tol), ("max_iter", args.max_iter)) if v is not None})
    counts, report = solve_hamling(hamling_input(study), opts)
    _emit_counts(counts, report, args)
    return EXIT_OK


def _variances(args) -> tuple[np.ndarray, tuple[str, ...]]:
    if args.variances:
        try:
            V = np.array([float(v) for v in args.variances.split(",")])
        except ValueError:
            raise InputError("--variances must be a comma-separated list of numbers") from None
        return V, ()
    if not args.input:
        raise InputError("cov needs --input (study) or --variances")
    study = _study(args, None)
    labels = tuple(f"{x:g}" for x in study.exposures) if study.exposures else ()
    return study.V, labels


def cmd_cov(args) -> int:
    doc = _read_json(args.counts)
    try:
        counts = PseudoCounts.from_dict(doc, args.measure)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.counts} is not a counts document: {exc}") from None
    V, labels = _variances(args)
    cov = covariance_matrix(counts, V, labels or None)
    if args.format == "csv":
        _emit(cov.to_csv(DIGITS), args.output)
    else:
        _emit(_dumps(cov.to_dict()), args.output)
    return EXIT_OK


def _read_matrix(path: str, n: int) -> np.ndarray:
    if path.lower().endswith(".csv"):
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
            M = np.array([[float(x) for x in r] for r in rows[1:] if r])
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read covariance CSV {path}: {exc}") from None
    else:
        doc = _read_json(path)
        M = np.array(doc["matrix"] if isinstance(doc, dict) else doc, dtype=float)
    if M.shape != (n, n):
        raise InputError(f"covariance matrix is {M.shape}, expected {(n, n)}")
    return M


def cmd_fit(args) -> int:
    study = _study(args, None)
    if study.exposures is None:
        raise InputError("fit needs exposures in the study file")
    X = design_matrix(study.exposures, study.reference_exposure, intercept=args.intercept)
    if args.method == "gls":
        if not args.cov:
            raise InputError("--method gls needs --cov")
        fit = gls_fit(X, study.L, _read_matrix(args.cov, study.n))
    elif args.method == "wls":
        fit = wls_fit(X, study.L, study.V)
    else:
        fit = ols_fit(X, study.L)
    doc = {"beta": fit.beta, "variance": fit.variance, "method": fit.method}
    if args.intercept:
        doc["coef"] = fit.coef.tolist()
        doc["cov"] = fit.cov.tolist()
    _emit(_dumps(doc), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    kw: dict[str, Any] = {"seed": args.seed, "replications": args.replications}
    if args.n0 is not None:
        kw["n0"] = args.n0
    cfg = SimConfig(**kw)
    summary = run_trend_simulation(cfg)
    doc = summary.to_dict()
    doc["histogram"] = histogram(summary, args.bins)
    _emit(_dumps(doc), args.out)
    if args.samples_csv:
        write_samples_csv(summary, args.samples_csv)
    return EXIT_OK


def _check_tuple(doc: dict, measure: EffectMeasure):
    try:
        n, p, z, r1, r2 = (doc[k] for k in ("n", "p", "z", "r1", "r2"))
    except KeyError as exc:
        raise InputError(f"check input is missing {exc}") from None
    v = doc.get("v")
    if measure is EffectMeasure.OR:
        if v is None:
            raise InputError("OR check needs v")
        return equivariant_or(n, p, z, r1, r2, v)
    return equivariant_rr(n, p, z, r1, r2, v)


def cmd_check(args) -> int:
    doc = _read_json(args.input)
    if not isinstance(doc, dict):
        raise InputError("check input must be a JSON object")
    measure = EffectMeasure.parse(args.measure or doc.get("measure", "rr"))
    if "r1" in doc:
        try:
            summary = _check_tuple(doc, measure)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        out = {"feasible": summary.feasible, "verdict": "Feasible" if summary.feasible else "Infeasible",
               "equivariant": summary.to_dict()}
        _emit(_dumps(out), args.output)
        if not summary.feasible:
            print(f"Infeasible: {summary.reason}", file=sys.stderr)
            return EXIT_SOLVER
        return EXIT_OK

    study = _study(args, "hamling")
    inp = hamling_input(study)
    out: dict[str, Any] = {}
    if np.allclose(inp.V, inp.V[0], rtol=1e-12, atol=0):
        out["equivariant"] = equivariant_summary(inp).to_dict()
    try:
        counts, report = solve_hamling(inp)
    except SolveFailed as exc:
        out.update(feasible=False, verdict=exc.report.termination.value, report=exc.report.to_dict())
        _emit(_dumps(out), args.output)
        print(f"{exc.report.termination.value}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    out.update(feasible=True, verdict="Feasible", counts=counts.to_dict(), report=report.to_dict())
    _emit(_dumps(out), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_study_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--input", "-i", required=required, help="study JSON or CSV")
    p.add_argument("--measure", choices=["or", "rr"], help="effect measure (required for CSV input)")
    p.add_argument("--total-cases", type=float, help="total cases M1 (CSV input)")
    p.add_argument("--p", type=float, help="unexposed controls / total controls")
    p.add_argument("--z", type=float, help="total controls / total cases")
    p.add_argument("--standard-errors", action="store_true", help="the variance column holds standard errors")


def _add_output_args(p: argparse.ArgumentParser, formats: bool = True) -> None:
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    if formats:
        p.add_argument("--format", choices=["json", "csv"], default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pseudocov",
                                     description="Pseudo-count and within-study covariance reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gl", help="GL pseudo-counts from estimates, group totals and total cases")
    _add_study_args(p)
    p.add_argument("--solver", choices=["convex", "classic"], default="convex")
    p.add_argument("--tol", type=float, help="gradient infinity-norm tolerance")
    p.add_argument("--max-iter", type=int)
    _add_output_args(p)
    p.set_defaults(func=cmd_gl)

    p = sub.add_parser("hamling", help="Hamling pseudo-counts from estimates, variances, p and z")
    _add_study_args(p)
    p.add_argument("--tol", type=float, help="relative residual tolerance")
    p.add_argument("--max-iter", type=int)
    _add_output_args(p)
    p.set_defaults(func=cmd_hamling)

    p = sub.add_parser("cov", help="covariance matrix from counts and reported variances")
    p.add_argument("--counts", "-c", required=True, help="counts JSON from gl or hamling")
    _add_study_args(p, required=False)
    p.add_argument("--variances", help="comma-separated variances (instead of --input)")
    _add_output_args(p)
    p.set_defaults(func=cmd_cov)

    p = sub.add_parser("fit", help="dose-response slope")
    _add_study_args(p)
    p.add_argument("--method", choices=["gls", "wls", "ols"], default="gls")
    p.add_argument("--cov", help="covariance JSON or CSV (for gls)")
    p.add_argument("--intercept", action="store_true", help="also fit an intercept")
    _add_output_args(p, formats=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo GLS vs OLS comparison")
    p.add_argument("--seed", type=int, default=SimConfig.seed)
    p.add_argument("--replications", type=int, default=SimConfig.replications)
    p.add_argument("--n0", type=int, help="reference group size")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", "--output", "-o", dest="out", help="summary JSON (default: stdout)")
    p.add_argument("--samples-csv", help="write per-replication estimates here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="solvability diagnostics for the Hamling equations")
    _add_study_args(p)
    _add_output_args(p, formats=False)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for issue in exc.issues:
            print(f"error: {issue.kind}: {issue.message}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, InfeasiblePointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolveFailed as exc:
        report = exc.report
        print(f"{report.termination.value}: {exc}", file=sys.stderr)
        diag = _round(dict(report.diagnostics))
        if diag:
            print(json.dumps(diag, indent=2), file=sys.stderr)
        return EXIT_SOLVER
    except (NonPositiveRadicand, SingularMatrixError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
