"""Maximum-likelihood estimation of region-specific spatial coefficients.

With A = I - (I_T (x) W diag(rho)) and Gaussian innovations, profiling
beta and sigma^2 out of the likelihood leaves the concentrated objective

    l_c(rho) = -(nT/2) ln(RSS(rho)/nT) + ln|A| - (nT/2)(1 + ln 2pi),

where RSS is the residual sum of squares of the filtered response A Y
regressed on X. Writing D for the spatial-lag regressor matrix
(column i of time block t is y_{it} W[:, i], so dA Y/drho_i = -D[:, i]),
Q for the X-annihilator and G = (I_n - W diag(rho))^{-1} W:

    score_i  = nT (D' Q A Y)_i / RSS - T G_ii
    hess_ij  = -nT (Q D)'(Q D)_ij / RSS
               + 2 nT (D' Q A Y)_i (D' Q A Y)_j / RSS^2
               - T G_ij G_ji.

Fisher scoring preconditions the score with an approximation of the
expected negative Hessian. Both ratio terms above are ratios of
quadratic forms in the innovations; their expectations combine the
second-order Taylor rules

    E[X/Y]   ~ E(X)/E(Y) - Cov(X,Y)/E(Y)^2 + Var(Y) E(X)/E(Y)^3
    E[X/Y^2] ~ E(X)/E(Y)^2 - 2 Cov(X,Y)/E(Y)^3 + 3 Var(Y) E(X)/E(Y)^4

with exact Gaussian moments of the quadratic forms (A Y ~ N(X beta,
sigma^2 I), so RSS/sigma^2 is exactly chi^2 with nT - K degrees of
freedom). Every moment reduces to n x n matrices and thin X factors;
no nT x nT matrix is formed. The result is symmetrized and its
eigenvalues floored at 1e-8 before inversion.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .linalg import (
    SpatialFilterError,
    check_rho,
    filter_log_det,
    spatial_filter,
    spatial_solve,
)
from .panel import PanelDataset
from .robust import (
    EstimationError,
    fit_robust,
    spatial_lag_regressors,
    suggest_power_order,
)
from .weights import WeightsMatrix

__all__ = [
    "ScoringConfig",
    "MlFit",
    "beta_given_rho",
    "sigma2_given",
    "concentrated_loglik",
    "score_rho",
    "hessian_rho",
    "fisher_info_rho",
    "beta_covariance",
    "fit_ml",
]

_LOG_2PI = float(np.log(2.0 * np.pi))
_EIG_FLOOR = 1e-8


@dataclass(frozen=True)
class ScoringConfig:
    """Knobs for the Fisher-scoring loop.

    epsilon        threshold on the max-norm of the coefficient update
    score_tol      threshold on the max-norm of the score at convergence
    max_iterations cap on accepted scoring steps
    rho_init       "zeros", "robust", or an explicit length-n vector
    step_damping   initial fraction of the scoring step (halved on
                   likelihood decrease, at most max_step_halvings times)
    info_method    "taylor" for the expected-information approximation,
                   "observed" to precondition with the negative Hessian
    rho_bound      iterates are clamped to [-rho_bound, rho_bound]
    robust_q       instrument power for the robust warm start (auto when
                   None)
    """

    epsilon: float = 1e-8
    score_tol: float = 1e-6
    max_iterations: int = 200
    rho_init: object = "zeros"
    step_damping: float = 1.0
    max_step_halvings: int = 30
    info_method: str = "taylor"
    rho_bound: float = 1.0 - 1e-6
    robust_q: int | None = None


@dataclass(frozen=True)
class MlFit:
    """Converged (or stopped) maximum-likelihood fit."""

    rho_hat: np.ndarray
    beta_hat: np.ndarray
    sigma2_hat: float
    loglik: float
    rho_cov: np.ndarray
    beta_cov: np.ndarray
    iterations: int
    converged: bool
    trace: tuple
    config: ScoringConfig
    covariates: tuple
    region_ids: tuple


def _check_pair(data: PanelDataset, w: WeightsMatrix) -> None:
    if data.n != w.n:
        raise ValueError(f"panel has n={data.n} but weights have n={w.n}")


def beta_given_rho(data: PanelDataset, w: WeightsMatrix, rho: np.ndarray) -> np.ndarray:
    """Profiled covariate coefficients (X'X)^{-1} X' A Y."""
    _check_pair(data, w)
    m = spatial_filter(rho, w, data.y)
    beta, _, rank, _ = np.linalg.lstsq(data.x, m, rcond=None)
    if rank < data.K:
        raise EstimationError("design matrix lost full rank")
    return beta


def sigma2_given(
    data: PanelDataset, w: WeightsMatrix, rho: np.ndarray, beta: np.ndarray
) -> float:
    """Profiled innovation variance ||A Y - X beta||^2 / (nT)."""
    _check_pair(data, w)
    resid = spatial_filter(rho, w, data.y) - data.x @ np.asarray(beta, dtype=float)
    return float(resid @ resid) / data.nT


def _profile(data: PanelDataset, w: WeightsMatrix, rho: np.ndarray):
    """Filtered response, profiled residual and RSS at rho."""
    m = spatial_filter(rho, w, data.y)
    beta, _, rank, _ = np.linalg.lstsq(data.x, m, rcond=None)
    if rank < data.K:
        raise EstimationError("design matrix lost full rank")
    resid = m - data.x @ beta
    rss = float(resid @ resid)
    if rss <= 0.0 or rss < 1e-300:
        raise EstimationError("degenerate fit: zero residual sum of squares")
    return m, beta, resid, rss


def concentrated_loglik(data: PanelDataset, w: WeightsMatrix, rho: np.ndarray) -> float:
    """Profiled Gaussian log-likelihood at rho.

    Equals the full log-likelihood with the profiled beta and sigma^2
    substituted back in.
    """
    _check_pair(data, w)
    _, _, _, rss = _profile(data, w, rho)
    nt = data.nT
    logdet = filter_log_det(rho, w, data.T)
    return -0.5 * nt * np.log(rss / nt) + logdet - 0.5 * nt * (1.0 + _LOG_2PI)


def _multiplier_lag(rho: np.ndarray, w: WeightsMatrix) -> np.ndarray:
    """G = (I_n - W diag(rho))^{-1} W."""
    s = np.eye(w.n) - w.w * rho[None, :]
    return scipy.linalg.solve(s, w.w)


def score_rho(data: PanelDataset, w: WeightsMatrix, rho: np.ndarray) -> np.ndarray:
    """Gradient of the concentrated log-likelihood."""
    _check_pair(data, w)
    rho = check_rho(rho, w.n)
    _, _, resid, rss = _profile(data, w, rho)
    d = spatial_lag_regressors(w, data)
    g = _multiplier_lag(rho, w)
    return data.nT * (d.T @ resid) / rss - data.T * np.diag(g)


def hessian_rho(data: PanelDataset, w: WeightsMatrix, rho: np.ndarray) -> np.ndarray:
    """Hessian of the concentrated log-likelihood (symmetric)."""
    _check_pair(data, w)
    rho = check_rho(rho, w.n)
    _, _, resid, rss = _profile(data, w, rho)
    d = spatial_lag_regressors(w, data)
    ux, _ = scipy.linalg.qr(data.x, mode="economic")
    dq = d - ux @ (ux.T @ d)
    dr = d.T @ resid
    g = _multiplier_lag(rho, w)
    nt = data.nT
    hess = (
        -nt * (dq.T @ dq) / rss
        + 2.0 * nt * np.outer(dr, dr) / rss**2
        - data.T * (g * g.T)
    )
    return 0.5 * (hess + hess.T)


def _floor_pd(mat: np.ndarray) -> np.ndarray:
    """Symmetrize and floor eigenvalues at 1e-8."""
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, _EIG_FLOOR)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def fisher_info_rho(
    data: PanelDataset,
    w: WeightsMatrix,
    rho: np.ndarray,
    beta: np.ndarray,
    sigma2: float,
) -> np.ndarray:
    """Approximate expected negative Hessian of the concentrated loglik.

    Exact Gaussian moments of the quadratic-form numerators and of the
    chi-square denominator enter the second-order Taylor rules for
    E[X/Y] and E[X/Y^2]; the combined matrix is symmetrized and
    eigenvalue-floored so it is always safe to invert.
    """
    _check_pair(data, w)
    rho = check_rho(rho, w.n)
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != data.K:
        raise ValueError(f"beta has {beta.shape[0]} entries, expected {data.K}")
    if not sigma2 > 0 or not np.isfinite(sigma2):
        raise EstimationError(f"information approximation failed: sigma2={sigma2!r}")
    n, T, K, nt = data.n, data.T, data.K, data.nT
    wmat = w.w

    s = np.eye(n) - wmat * rho[None, :]
    sinv = scipy.linalg.solve(s, np.eye(n))
    g = sinv @ wmat
    ss = sinv @ sinv.T
    ww = wmat.T @ wmat

    ux, _ = scipy.linalg.qr(data.x, mode="economic")
    u3 = ux.reshape(T, n, K)
    phi = np.einsum("tik,tjk->ij", u3, u3)
    e1 = wmat.T @ phi @ wmat
    e2 = sinv @ phi @ wmat
    e3 = sinv @ phi @ sinv.T
    aw = np.matmul(u3.transpose(0, 2, 1), wmat)  # (T, K, n): rows U_t' W
    su = np.matmul(sinv, u3)  # (T, n, K)
    f = np.einsum("tai,tib->iab", aw, su)  # (n, K, K)
    tr_ff = np.einsum("iab,jba->ij", f, f)
    tr_fft = np.einsum("iab,jab->ij", f, f)

    mean = spatial_solve(rho, w, data.x @ beta)
    dm = (wmat[None, :, :] * mean.reshape(T, n)[:, None, :]).reshape(nt, n)
    dmq = dm - ux @ (ux.T @ dm)
    aqa = dmq.T @ dmq

    tau = T * np.diag(g) - np.diag(e2)
    lam = ss * (T * ww - e1)
    kap = T * (g * g.T) - g * e2.T - g.T * e2 + tr_ff
    mu = T * (ss * ww) - ss * e1 - ww * e3 + tr_fft

    nu = nt - K
    ey = sigma2 * nu
    vy = 2.0 * sigma2**2 * nu
    ex = aqa + sigma2 * lam
    en = sigma2 * aqa + sigma2**2 * (np.outer(tau, tau) + kap + lam)
    cxy = 2.0 * sigma2**2 * mu
    cny = 2.0 * sigma2**2 * aqa + sigma2**3 * (
        4.0 * np.outer(tau, tau) + 4.0 * kap + 2.0 * lam + 2.0 * mu
    )

    t1 = ex / ey - cxy / ey**2 + vy * ex / ey**3
    t2 = en / ey**2 - 2.0 * cny / ey**3 + 3.0 * vy * en / ey**4
    info = nt * t1 - 2.0 * nt * t2 + T * (g * g.T)
    if not np.all(np.isfinite(info)):
        raise EstimationError("information approximation failed: non-finite entries")
    return _floor_pd(info)


def beta_covariance(
    data: PanelDataset, w: WeightsMatrix, rho: np.ndarray, sigma2: float
) -> np.ndarray:
    """sigma^2 (X'X)^{-1} X' A A' X (X'X)^{-1}."""
    _check_pair(data, w)
    atx = spatial_filter(rho, w, data.x, transpose=True)
    xtx = data.x.T @ data.x
    inner = atx.T @ atx
    tmp = scipy.linalg.solve(xtx, inner, assume_a="pos")
    cov = sigma2 * scipy.linalg.solve(xtx, tmp.T, assume_a="pos").T
    return 0.5 * (cov + cov.T)


def _information(data, w, rho, config: ScoringConfig) -> np.ndarray:
    if config.info_method == "observed":
        return _floor_pd(-hessian_rho(data, w, rho))
    if config.info_method != "taylor":
        raise ValueError(f"unknown info_method {config.info_method!r}")
    _, beta, _, rss = _profile(data, w, rho)
    return fisher_info_rho(data, w, rho, beta, rss / data.nT)


def _initial_rho(data, w, config: ScoringConfig) -> np.ndarray:
    bound = config.rho_bound
    init = config.rho_init
    if isinstance(init, str):
        if init == "zeros":
            return np.zeros(w.n)
        if init == "robust":
            q = config.robust_q
            if q is None:
                q = suggest_power_order(w.n, data)
            rfit = fit_robust(data, w, q=q)
            return np.clip(rfit.rho_hat, -bound, bound)
        raise ValueError(f"unknown rho_init {init!r}")
    rho0 = np.asarray(init, dtype=float).ravel()
    if rho0.shape[0] != w.n:
        raise ValueError(f"rho_init has {rho0.shape[0]} entries, expected {w.n}")
    if not np.all(np.isfinite(rho0)):
        raise ValueError("rho_init contains non-finite values")
    return np.clip(rho0, -bound, bound)


def fit_ml(
    data: PanelDataset, w: WeightsMatrix, config: ScoringConfig | None = None
) -> MlFit:
    """Fisher scoring on the concentrated log-likelihood.

    Each step solves the preconditioned system info * step = score and
    backtracks (halving, at most ``max_step_halvings`` times) until the
    likelihood does not decrease; iterates stay inside the open unit
    interval via clamping. Convergence requires both a small update and
    a small score. Deterministic: identical inputs give identical
    traces.
    """
    _check_pair(data, w)
    if config is None:
        config = ScoringConfig()
    bound = config.rho_bound
    rho = _initial_rho(data, w, config)
    ll = concentrated_loglik(data, w, rho)
    trace = [(0, rho.copy(), ll)]
    converged = False
    iterations = 0

    for it in range(1, config.max_iterations + 1):
        sc = score_rho(data, w, rho)
        if np.max(np.abs(sc)) < config.score_tol:
            converged = True
            break
        info = _information(data, w, rho, config)
        try:
            direction = scipy.linalg.cho_solve(scipy.linalg.cho_factor(info), sc)
        except scipy.linalg.LinAlgError as exc:
            raise EstimationError("information matrix not factorizable") from exc

        step = config.step_damping
        accepted = False
        saw_finite = False
        cand, ll_new = rho, ll
        for _ in range(config.max_step_halvings + 1):
            cand = np.clip(rho + step * direction, -bound, bound)
            try:
                ll_new = concentrated_loglik(data, w, cand)
            except (EstimationError, SpatialFilterError):
                ll_new = np.nan
            if np.isfinite(ll_new):
                saw_finite = True
                if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            if not saw_finite:
                raise EstimationError(
                    "scoring step produced non-finite likelihood after "
                    f"{config.max_step_halvings} halvings"
                )
            break  # no improving step left; stop at the current point
        iterations = it
        delta = float(np.max(np.abs(cand - rho)))
        rho, ll = cand, ll_new
        trace.append((it, rho.copy(), ll))
        if delta < config.epsilon:
            if np.max(np.abs(score_rho(data, w, rho))) < config.score_tol:
                converged = True
                break

    _, beta, _, rss = _profile(data, w, rho)
    sigma2 = rss / data.nT
    info = _information(data, w, rho, config)
    cho = scipy.linalg.cho_factor(info)
    rho_cov = scipy.linalg.cho_solve(cho, np.eye(w.n))
    rho_cov = 0.5 * (rho_cov + rho_cov.T)
    return MlFit(
        rho_hat=rho,
        beta_hat=beta,
        sigma2_hat=sigma2,
        loglik=ll,
        rho_cov=rho_cov,
        beta_cov=beta_covariance(data, w, rho, sigma2),
        iterations=iterations,
        converged=converged,
        trace=tuple(trace),
        config=config,
        covariates=data.covariates,
        region_ids=data.region_ids,
    )
