"""Monte Carlo comparison of GLS against OLS/WLS when levels share a reference group.

Each replication draws the sample mean of every group, forms the contrasts
``eta_k = mean_k - mean_0`` and fits the slope through the origin. Because
every contrast subtracts the same reference mean, ``Cov(eta_j, eta_k) =
sigma_0^2 / n_0`` for ``j != k``; GLS with that covariance is the efficient
linear estimator.

Random numbers come from numpy's PCG64 generator seeded with ``seed``.
Normal variates use numpy's ziggurat sampler, which is deterministic across
platforms for a given numpy version.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .trend import design_matrix, gls_fit

__all__ = ["SimConfig", "SimSummary", "true_covariance", "run_trend_simulation", "histogram", "write_samples_csv"]


@dataclass(frozen=True)
class SimConfig:
    n0: int = 1
    group_sizes: tuple[int, ...] = (10, 10, 10, 10)
    beta_true: float = 1.0
    # reference first, then one entry per exposed group; unit SDs are a choice
    sigma: tuple[float, ...] | None = None
    exposures: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)
    replications: int = 5000
    seed: int = 20240101
    keep_samples: bool = True

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(n) for n in self.group_sizes))
        object.__setattr__(self, "exposures", tuple(float(x) for x in self.exposures))
        k = len(self.group_sizes)
        if self.sigma is None:
            object.__setattr__(self, "sigma", (1.0,) * (k + 1))
        else:
            object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        if self.n0 < 1 or any(n < 1 for n in self.group_sizes):
            raise ValueError("group sizes must be at least 1")
        if len(self.exposures) != k or k == 0:
            raise ValueError("need one exposure per exposed group")
        if len(self.sigma) != k + 1:
            raise ValueError("sigma needs the reference SD followed by one SD per group")
        if any(s < 0 for s in self.sigma):
            raise ValueError("standard deviations must be nonnegative")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class SimSummary:
    config: SimConfig
    mean_gls: float
    mean_ols: float
    mean_wls: float
    var_gls: float
    var_ols: float
    var_wls: float
    # sampling variances implied by the true covariance
    theory_var_gls: float
    theory_var_ols: float
    theory_var_wls: float
    samples: dict[str, np.ndarray] | None = field(default=None, repr=False)

    def to_dict(self, include_samples: bool = False) -> dict:
        d = {k: getattr(self, k) for k in (
            "mean_gls", "mean_ols", "mean_wls", "var_gls", "var_ols", "var_wls",
            "theory_var_gls", "theory_var_ols", "theory_var_wls")}
        d["config"] = asdict(self.config)
        if include_samples and self.samples is not None:
            d["samples"] = {k: v.tolist() for k, v in self.samples.items()}
        return d

    def to_json(self, include_samples: bool = False) -> str:
        return json.dumps(self.to_dict(include_samples), indent=2)

    def __eq__(self, other):
        if not isinstance(other, SimSummary):
            return NotImplemented
        a, b = self.to_dict(True), other.to_dict(True)
        return a == b


def true_covariance(config: SimConfig) -> np.ndarray:
    s0 = config.sigma[0] ** 2 / config.n0
    own = np.array(config.sigma[1:]) ** 2 / np.array(config.group_sizes)
    return np.full((own.size, own.size), s0) + np.diag(own)


def _weights(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # the slope is linear in eta, so fitting each unit vector gives its weights
    n = C.shape[0]
    return np.array([gls_fit(X, np.eye(n)[k], C).beta for k in range(n)])


def run_trend_simulation(config: SimConfig | None = None) -> SimSummary:
    config = config or SimConfig()
    rng = np.random.default_rng(config.seed)
    x = np.array(config.exposures)
    X = design_matrix(x)
    sizes = np.array((config.n0,) + config.group_sizes, dtype=float)
    sd_mean = np.array(config.sigma) / np.sqrt(sizes)
    mu = np.concatenate([[0.0], config.beta_true * x])

    means = mu + sd_mean * rng.standard_normal((config.replications, sizes.size))
    eta = means[:, 1:] - means[:, :1]

    C = true_covariance(config)
    weights = {}
    theory = {}
    diag_C = np.diag(np.diag(C))
    # a zero-variance design degenerates; fall back to OLS weights there
    for name, M in (("gls", C), ("wls", diag_C), ("ols", np.eye(x.size))):
        try:
            w = _weights(X, M)
        except np.linalg.LinAlgError:
            w = _weights(X, np.eye(x.size))
        weights[name] = w
        theory[name] = float(w @ C @ w)

    est = {name: eta @ w for name, w in weights.items()}
    ddof = 1 if config.replications > 1 else 0
    stats = {}
    for name, b in est.items():
        stats[f"mean_{name}"] = float(b.mean())
        stats[f"var_{name}"] = float(b.var(ddof=ddof))
    return SimSummary(
        config=config,
        theory_var_gls=theory["gls"], theory_var_ols=theory["ols"], theory_var_wls=theory["wls"],
        samples=({**est, "eta": eta} if config.keep_samples else None),
        **stats,
    )


def histogram(summary: SimSummary, bins: int = 50) -> dict:
    """Common-edge histogram counts of the GLS and OLS slope estimates."""
    if summary.samples is None:
        raise ValueError("summary was run without samples")
    g, o = summary.samples["gls"], summary.samples["ols"]
    edges = np.histogram_bin_edges(np.concatenate([g, o]), bins=bins)
    return {
        "edges": edges.tolist(),
        "gls": np.histogram(g, edges)[0].tolist(),
        "ols": np.histogram(o, edges)[0].tolist(),
    }


def write_samples_csv(summary: SimSummary, path: str | Path) -> None:
    if summary.samples is None:
        raise ValueError("summary was run without samples")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "beta_gls", "beta_ols"])
        for i, (g, o) in enumerate(zip(summary.samples["gls"], summary.samples["ols"])):
            w.writerow([i, repr(float(g)), repr(float(o))])

