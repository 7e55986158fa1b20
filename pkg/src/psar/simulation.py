"""Synthetic panels and Monte Carlo experiments.

Panels are drawn from the model itself: fix a weights matrix on a
rectangular grid, fix coefficients, draw covariates and innovations,
then solve each cross-section through the spatial filter. Replicates
use statistically independent child streams of one root seed, so any
replicate can be regenerated in isolation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .linalg import SpatialFilterError, check_rho, spatial_solve
from .ml import ScoringConfig, fit_ml
from .panel import PanelDataset
from .robust import EstimationError, fit_robust, suggest_power_order
from .weights import WeightsMatrix, grid_weights

__all__ = [
    "DgpConfig",
    "SimulatedPanel",
    "child_rng",
    "gamma_centered_innovations",
    "generate_panel",
    "McResult",
    "run_monte_carlo",
]

_COVARIATES = ("intercept", "x1", "x2")


@dataclass(frozen=True)
class DgpConfig:
    """Design of a simulated panel.

    rho_spec may be a scalar (shared by all regions), a length-n array
    of fixed coefficients, or ("uniform", lo, hi) to redraw region
    coefficients independently in each replicate. Covariates are an
    intercept, a standard normal draw and a normal draw centered at 2.
    innovation "normal" scales to variance sigma2; "gamma_centered"
    draws centered gamma variables whose variance differs across
    observations (sigma2 is ignored).
    """

    n: int
    T: int
    beta: tuple = (1.0, -1.0, 0.5)
    rho_spec: object = 0.5
    innovation: str = "normal"
    sigma2: float = 1.0
    seed: int = 0
    rows: int | None = None
    cols: int | None = None

    def __post_init__(self):
        if self.n < 2 or self.T < 1:
            raise ValueError(f"need n >= 2 and T >= 1, got n={self.n}, T={self.T}")
        if len(tuple(self.beta)) != len(_COVARIATES):
            raise ValueError(
                f"beta must have {len(_COVARIATES)} entries "
                f"(covariates are {_COVARIATES})"
            )
        if self.innovation not in ("normal", "gamma_centered"):
            raise ValueError(f"unknown innovation {self.innovation!r}")
        if self.innovation == "normal" and not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2!r}")
        rows, cols = self._grid_shape()
        if rows * cols != self.n:
            raise ValueError(f"grid {rows}x{cols} does not hold n={self.n} regions")

    def _grid_shape(self) -> tuple:
        if self.rows is not None or self.cols is not None:
            rows = self.rows if self.rows is not None else self.n // self.cols
            cols = self.cols if self.cols is not None else self.n // rows
            return rows, cols
        rows = 1
        for cand in range(1, int(np.sqrt(self.n)) + 1):
            if self.n % cand == 0:
                rows = cand
        return rows, self.n // rows


@dataclass(frozen=True)
class SimulatedPanel:
    """One replicate: the panel, its weights and the generating truth."""

    data: PanelDataset
    weights: WeightsMatrix
    rho: np.ndarray
    innovations: np.ndarray
    rep: int


def child_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent, reproducible stream for one replicate."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(rep,))
    return np.random.Generator(np.random.Philox(ss))


def gamma_centered_innovations(
    rng: np.random.Generator, size: int, v: np.ndarray | None = None
) -> np.ndarray:
    """Mean-zero gamma draws with conditional variance 1 / (4 v).

    v defaults to fresh uniform draws on [0.5, 1.5]; each innovation is
    gamma(shape=v, scale=1/(2v)) minus its mean 1/2.
    """
    if v is None:
        v = rng.uniform(0.5, 1.5, size)
    else:
        v = np.broadcast_to(np.asarray(v, dtype=float), (size,))
    return rng.gamma(shape=v, scale=1.0 / (2.0 * v)) - 0.5


def _resolve_rho(config: DgpConfig, rng: np.random.Generator) -> np.ndarray:
    spec = config.rho_spec
    if isinstance(spec, tuple) and len(spec) == 3 and spec[0] == "uniform":
        lo, hi = float(spec[1]), float(spec[2])
        if not -1.0 <= lo <= hi <= 1.0:
            raise ValueError(f"uniform range ({lo}, {hi}) not inside [-1, 1]")
        return check_rho(rng.uniform(lo, hi, config.n), config.n)
    if np.isscalar(spec):
        rho = np.full(config.n, float(spec))
    else:
        rho = np.asarray(spec, dtype=float).ravel()
    return check_rho(rho, config.n)


def generate_panel(config: DgpConfig, rep: int = 0) -> SimulatedPanel:
    """Draw one replicate of the panel design.

    Draw order inside the replicate stream is fixed (rho if random,
    then covariates, then innovations), so generated panels are stable
    across calls and across which replicates are requested.
    """
    rng = child_rng(config.seed, rep)
    rows, cols = config._grid_shape()
    w = grid_weights(rows, cols)
    rho = _resolve_rho(config, rng)
    n, T = config.n, config.T
    nt = n * T
    x = np.column_stack(
        [np.ones(nt), rng.normal(0.0, 1.0, nt), rng.normal(2.0, 1.0, nt)]
    )
    if config.innovation == "normal":
        eps = rng.normal(0.0, np.sqrt(config.sigma2), nt)
    else:
        eps = gamma_centered_innovations(rng, nt)
    beta = np.asarray(config.beta, dtype=float)
    y = spatial_solve(rho, w, x @ beta + eps)
    data = PanelDataset(
        y=y,
        x=x,
        n=n,
        T=T,
        region_ids=tuple(f"r{i}" for i in range(n)),
        time_ids=tuple(range(T)),
        covariates=_COVARIATES,
    )
    return SimulatedPanel(data=data, weights=w, rho=rho, innovations=eps, rep=rep)


@dataclass(frozen=True)
class McResult:
    """Per-replicate estimates plus groupwise error summaries."""

    records: pd.DataFrame
    summary: pd.DataFrame
    failures: pd.DataFrame
    reps: int


def _fit_records(name: str, sim: SimulatedPanel, beta_hat, rho_hat, config: DgpConfig):
    rows = []
    beta_true = np.asarray(config.beta, dtype=float)
    for k, cov in enumerate(_COVARIATES):
        rows.append(
            {
                "rep": sim.rep,
                "estimator": name,
                "parameter": f"beta[{cov}]",
                "truth": beta_true[k],
                "estimate": float(beta_hat[k]),
            }
        )
    for i, rid in enumerate(sim.data.region_ids):
        rows.append(
            {
                "rep": sim.rep,
                "estimator": name,
                "parameter": f"rho[{rid}]",
                "truth": float(sim.rho[i]),
                "estimate": float(rho_hat[i]),
            }
        )
    return rows


def run_monte_carlo(
    config: DgpConfig,
    reps: int,
    estimators: tuple = ("ml", "robust"),
    ml_config: ScoringConfig | None = None,
    robust_q: int | None = None,
) -> McResult:
    """Fit each replicate with the requested estimators.

    Replicates where an estimator fails (singular systems, non-finite
    likelihoods, no convergence) are listed in ``failures`` and left out
    of the records for that estimator only.
    """
    if reps < 1:
        raise ValueError(f"reps must be positive, got {reps}")
    unknown = set(estimators) - {"ml", "robust"}
    if unknown:
        raise ValueError(f"unknown estimators: {sorted(unknown)}")
    records, failures = [], []
    q = robust_q
    for rep in range(reps):
        sim = generate_panel(config, rep)
        if "robust" in estimators and q is None:
            q = suggest_power_order(config.n, sim.data)
        for name in estimators:
            try:
                if name == "ml":
                    fit = fit_ml(sim.data, sim.weights, ml_config)
                    if not fit.converged:
                        raise EstimationError("scoring did not converge")
                    records.extend(
                        _fit_records(name, sim, fit.beta_hat, fit.rho_hat, config)
                    )
                else:
                    rfit = fit_robust(sim.data, sim.weights, q=q)
                    records.extend(
                        _fit_records(name, sim, rfit.beta_hat, rfit.rho_hat, config)
                    )
            except (EstimationError, SpatialFilterError, np.linalg.LinAlgError) as exc:
                failures.append(
                    {"rep": rep, "estimator": name, "error": f"{type(exc).__name__}: {exc}"}
                )
    rec_frame = pd.DataFrame(
        records, columns=["rep", "estimator", "parameter", "truth", "estimate"]
    )
    fail_frame = pd.DataFrame(failures, columns=["rep", "estimator", "error"])
    if len(rec_frame):
        err = rec_frame["estimate"] - rec_frame["truth"]
        work = rec_frame.assign(error=err, sq_error=err**2, abs_error=err.abs())
        grouped = work.groupby(["estimator", "parameter"], sort=True)
        summary = grouped.agg(
            n_ok=("rep", "nunique"),
            bias=("error", "mean"),
            mse=("sq_error", "mean"),
            abs_err_q25=("abs_error", lambda s: float(np.quantile(s, 0.25))),
            abs_err_median=("abs_error", "median"),
            abs_err_q75=("abs_error", lambda s: float(np.quantile(s, 0.75))),
        ).reset_index()
    else:
        summary = pd.DataFrame(
            columns=[
                "estimator",
                "parameter",
                "n_ok",
                "bias",
                "mse",
                "abs_err_q25",
                "abs_err_median",
                "abs_err_q75",
            ]
        )
    return McResult(records=rec_frame, summary=summary, failures=fail_frame, reps=reps)
