"""Hypothesis tests and summaries built on top of the estimators.

Includes the restricted fit with one shared spatial coefficient, a
Wald-type test of coefficient homogeneity with Satterthwaite degrees
of freedom, per-parameter Wald tables, and the direct/indirect/total
impact decomposition implied by the spatial multiplier.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.optimize
import scipy.stats

from .linalg import filter_log_det
from .ml import MlFit, fit_ml
from .panel import PanelDataset
from .robust import EstimationError, RobustFit
from .weights import WeightsMatrix

__all__ = [
    "CommonRhoFit",
    "fit_common_rho",
    "HomogeneityTest",
    "homogeneity_test",
    "wald_table",
    "spatial_multiplier",
    "impact_summary",
]

_RHO_BOUND = 1.0 - 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class CommonRhoFit:
    """Maximum-likelihood fit restricted to a single shared coefficient."""

    rho_hat: float
    variance: float
    beta_hat: np.ndarray
    sigma2_hat: float
    loglik: float
    at_boundary: bool
    covariates: tuple


def fit_common_rho(data: PanelDataset, w: WeightsMatrix) -> CommonRhoFit:
    """Profile likelihood over a scalar rho shared by all regions.

    On the diagonal rho * 1 the filtered response is y - rho * (lagged
    y), so the profiled residual sum of squares is an exact quadratic
    in rho and the log-determinant reduces to sums over the eigenvalues
    of W. The scalar objective is maximized by bounded search and the
    variance comes from the analytic second derivative at the optimum.
    """
    if data.n != w.n:
        raise ValueError(f"panel has n={data.n} but weights have n={w.n}")
    n, T, nt = data.n, data.T, data.nT
    y0 = data.y
    y1 = (data.y.reshape(T, n) @ w.w.T).ravel()
    coef0, _, rank, _ = np.linalg.lstsq(data.x, np.column_stack([y0, y1]), rcond=None)
    if rank < data.K:
        raise EstimationError("design matrix lost full rank")
    resid_pair = np.column_stack([y0, y1]) - data.x @ coef0
    e0, e1 = resid_pair[:, 0], resid_pair[:, 1]
    a, b, c = float(e0 @ e0), float(e0 @ e1), float(e1 @ e1)
    lams = np.linalg.eigvals(w.w)

    def rss(r: float) -> float:
        return a - 2.0 * b * r + c * r * r

    def negloglik(r: float) -> float:
        val = rss(r)
        if val <= 0.0:
            return np.inf
        logdet = T * float(np.sum(np.log(1.0 - r * lams)).real)
        return 0.5 * nt * np.log(val / nt) - logdet

    res = scipy.optimize.minimize_scalar(
        negloglik,
        bounds=(-_RHO_BOUND, _RHO_BOUND),
        method="bounded",
        options={"xatol": 1e-10},
    )
    rho0 = float(res.x)
    at_boundary = abs(rho0) > _RHO_BOUND - 1e-8

    val = rss(rho0)
    dval = -2.0 * b + 2.0 * c * rho0
    curv_rss = -0.5 * nt * (2.0 * c / val - (dval / val) ** 2)
    curv_det = -T * float(np.sum((lams / (1.0 - rho0 * lams)) ** 2).real)
    curvature = curv_rss + curv_det
    if not curvature < 0.0 or not np.isfinite(curvature):
        raise EstimationError(
            "shared-coefficient likelihood has no interior curvature at the optimum"
        )

    beta = coef0[:, 0] - rho0 * coef0[:, 1]
    sigma2 = val / nt
    loglik = -0.5 * nt * np.log(sigma2) + filter_log_det(
        np.full(n, rho0), w, T
    ) - 0.5 * nt * (1.0 + _LOG_2PI)
    return CommonRhoFit(
        rho_hat=rho0,
        variance=-1.0 / curvature,
        beta_hat=beta,
        sigma2_hat=sigma2,
        loglik=float(loglik),
        at_boundary=at_boundary,
        covariates=data.covariates,
    )


@dataclass(frozen=True)
class HomogeneityTest:
    """Wald-type test of equal spatial coefficients across regions."""

    t_squared: float
    f_statistic: float
    df1: int
    df2: float
    p_value: float
    rho_common: float
    contrast: np.ndarray
    region_ids: tuple


def homogeneity_test(
    data: PanelDataset,
    w: WeightsMatrix,
    ml_fit: MlFit | None = None,
    common_fit: CommonRhoFit | None = None,
) -> HomogeneityTest:
    """Test whether all regions share one spatial coefficient.

    The contrast d = rho_hat - rho0_hat * 1 is compared against its
    covariance var(rho0) * 11' + J^{-1}. The quadratic form is mapped
    to an F statistic whose denominator degrees of freedom follow the
    Satterthwaite matching of the two covariance components.
    """
    if ml_fit is None:
        ml_fit = fit_ml(data, w)
    if common_fit is None:
        common_fit = fit_common_rho(data, w)
    n, nt = data.n, data.nT
    d = ml_fit.rho_hat - common_fit.rho_hat
    ones = np.ones((n, n))
    v = common_fit.variance * ones + ml_fit.rho_cov
    vd = np.linalg.solve(v, d)
    t2 = float(d @ vd)
    if t2 < 0.0:
        raise EstimationError("homogeneity quadratic form is negative")

    if t2 == 0.0:
        df2 = float(nt - 1)
        f_stat = 0.0
        p = 1.0
    else:
        r1 = common_fit.variance * float(vd @ ones @ vd) / t2
        r2 = float(vd @ ml_fit.rho_cov @ vd) / t2
        denom = r1 * r1 + r2 * r2
        df2 = (nt - 1) / denom
        if not np.isfinite(df2) or df2 <= 0.0:
            raise EstimationError("degenerate Satterthwaite degrees of freedom")
        f_stat = (2.0 * nt - n - 1.0) / (n * (2.0 * nt - 1.0)) * t2
        p = float(scipy.stats.f.sf(f_stat, n, df2))
    return HomogeneityTest(
        t_squared=t2,
        f_statistic=float(f_stat),
        df1=n,
        df2=float(df2),
        p_value=p,
        rho_common=common_fit.rho_hat,
        contrast=d,
        region_ids=data.region_ids,
    )


def wald_table(fit: MlFit | RobustFit) -> pd.DataFrame:
    """Per-parameter estimates, standard errors and normal p-values."""
    if isinstance(fit, MlFit):
        names = [f"beta[{c}]" for c in fit.covariates]
        names += [f"rho[{r}]" for r in fit.region_ids]
        estimates = np.concatenate([fit.beta_hat, fit.rho_hat])
        variances = np.concatenate([np.diag(fit.beta_cov), np.diag(fit.rho_cov)])
    elif isinstance(fit, RobustFit):
        names = [f"beta[{c}]" for c in fit.covariates]
        names += [f"rho[{r}]" for r in fit.region_ids]
        estimates = fit.delta_hat
        variances = np.diag(fit.cov)
    else:
        raise TypeError(f"unsupported fit type {type(fit).__name__}")
    se = np.sqrt(np.maximum(variances, 0.0))
    z = np.zeros_like(estimates)
    regular = se > 0.0
    z[regular] = estimates[regular] / se[regular]
    pinned = ~regular & (estimates != 0.0)
    z[pinned] = np.where(estimates[pinned] > 0.0, np.inf, -np.inf)
    p = 2.0 * scipy.stats.norm.sf(np.abs(z))
    return pd.DataFrame(
        {
            "parameter": names,
            "estimate": estimates,
            "std_error": se,
            "z_value": z,
            "p_value": p,
        }
    )


def spatial_multiplier(w: WeightsMatrix, rho: np.ndarray) -> np.ndarray:
    """(I_n - W diag(rho))^{-1}, the equilibrium feedback matrix."""
    rho = np.asarray(rho, dtype=float).ravel()
    s = np.eye(w.n) - w.w * rho[None, :]
    return np.linalg.solve(s, np.eye(w.n))


def impact_summary(
    w: WeightsMatrix,
    rho: np.ndarray,
    beta: np.ndarray,
    covariates,
    exclude: tuple = ("intercept",),
) -> pd.DataFrame:
    """Average direct, indirect and total effect of each covariate.

    A unit change in covariate k everywhere moves the response by
    beta_k * multiplier; the diagonal of the multiplier carries the
    own-region (direct) part and off-diagonal entries the spillover.
    Covariates listed in ``exclude`` (the intercept by default) are
    omitted because a constant has no meaningful unit change.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    covariates = tuple(covariates)
    if beta.shape[0] != len(covariates):
        raise ValueError(
            f"{len(covariates)} covariate names for {beta.shape[0]} coefficients"
        )
    mult = spatial_multiplier(w, rho)
    mean_diag = float(np.mean(np.diag(mult)))
    mean_total = float(np.mean(mult.sum(axis=1)))
    rows = []
    for k, name in enumerate(covariates):
        if name in exclude:
            continue
        direct = beta[k] * mean_diag
        total = beta[k] * mean_total
        rows.append(
            {
                "covariate": name,
                "direct": direct,
                "indirect": total - direct,
                "total": total,
            }
        )
    return pd.DataFrame(rows, columns=["covariate", "direct", "indirect", "total"])
