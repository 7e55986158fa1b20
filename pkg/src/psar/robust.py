"""Instrumental-variable estimator robust to heteroskedastic innovations.

The model Y = X beta + (I_T (x) W diag(rho)) Y + eps is linear in
(beta, rho) once the spatial lag is rewritten with the regressor matrix
D: column j of time block t equals y_{jt} W[:, j], so that
D rho = (I_T (x) W diag(rho)) Y. D contains the response and is
endogenous; it is instrumented with the independent columns of

    [X, (I_T (x) W) X, ..., (I_T (x) W^q) X]

and the coefficients come from the projected normal equations

    delta_hat = [(P_H Z)' Z]^{-1} (P_H Z)' Y,   Z = [X, P_H D],

with P_H the orthogonal projector onto the instrument span, applied via
least squares (never formed densely). The covariance is the
heteroskedasticity-consistent sandwich B S B' with B the exact sample
coefficient map delta_hat - delta = B eps and S = diag of squared
structural residuals; the unit-innovation variant B B' is reported
alongside for comparison.

Identifying the K + n coefficients requires at least K + n independent
instrument columns. With a row-stochastic W every power maps the
intercept to itself, so the candidate supply is 1 + (K-1)(q+1) for a
design with one constant column; q has to grow with n.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .panel import PanelDataset
from .weights import WeightsMatrix

__all__ = [
    "EstimationError",
    "UnderIdentifiedError",
    "InstrumentSet",
    "RobustFit",
    "spatial_lag_regressors",
    "build_instruments",
    "projection_apply",
    "fit_robust",
    "suggest_power_order",
]

_PRUNE_TOL = 1e-10


class EstimationError(RuntimeError):
    """Raised when an estimator cannot produce a solution."""


class UnderIdentifiedError(EstimationError):
    """Raised when the instrument set cannot identify the coefficients."""


@dataclass(frozen=True)
class InstrumentSet:
    """Pruned instrument matrix with provenance.

    Fields
    ------
    h : np.ndarray
        n*T x L matrix of kept instrument columns.
    q : int
        Highest weight-matrix power in the candidate block.
    kept_columns : tuple
        One (power, covariate_name) pair per kept column; power 0 marks
        an original X column.
    basis : np.ndarray
        Orthonormal basis of the instrument span (thin QR factor), used
        to apply the projector without forming it.
    """

    h: np.ndarray
    q: int
    kept_columns: tuple
    basis: np.ndarray = field(repr=False, default=None)

    @property
    def L(self) -> int:
        return self.h.shape[1]

    def labels(self) -> tuple:
        return tuple(
            name if power == 0 else f"W^{power}:{name}"
            for power, name in self.kept_columns
        )


def spatial_lag_regressors(w: WeightsMatrix, data: PanelDataset) -> np.ndarray:
    """n*T x n matrix D with D rho = (I_T (x) W diag(rho)) Y.

    Column j of time block t is y_{jt} W[:, j]: the response of region j
    spread to its neighbors.
    """
    if data.n != w.n:
        raise ValueError(f"panel has n={data.n} but weights have n={w.n}")
    yb = data.y_blocks()  # (T, n)
    # block t equals W @ diag(y_t); stack the T blocks.
    return (w.w[None, :, :] * yb[:, None, :]).reshape(data.nT, data.n)


def suggest_power_order(n: int, data: PanelDataset) -> int:
    """Smallest q whose candidate supply covers K + n columns plus margin.

    Counts constant covariate columns once (a row-stochastic W fixes
    them), all others once per power.
    """
    n_const = sum(
        1 for k in range(data.K) if np.ptp(data.x[:, k]) == 0
    )
    n_var = data.K - n_const
    if n_var == 0:
        raise UnderIdentifiedError(
            "under-identified: increase q or covariates "
            "(all covariates constant)"
        )
    needed = data.K + n + 2
    q = 2
    while min(n_const, 1) + n_var * (q + 1) < needed:
        q += 1
    return q


def build_instruments(data: PanelDataset, w: WeightsMatrix, q: int) -> InstrumentSet:
    """Assemble and prune the instrument block [X, WX, ..., W^q X].

    Candidate columns are scanned in order (lower powers first) and a
    column is kept when its residual after projecting on the columns
    already kept exceeds 1e-10 relative to its own norm, so earlier
    columns win ties. Errors if fewer instruments than covariates
    survive.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if data.n != w.n:
        raise ValueError(f"panel has n={data.n} but weights have n={w.n}")
    candidates: list[np.ndarray] = []
    provenance: list[tuple[int, str]] = []
    block = data.x
    for power in range(q + 1):
        if power > 0:
            blocks = block.reshape(data.T, data.n, data.K)
            block = np.matmul(w.w, blocks).reshape(data.nT, data.K)
        for k in range(data.K):
            candidates.append(block[:, k])
            provenance.append((power, data.covariates[k]))

    kept_cols: list[np.ndarray] = []
    kept_prov: list[tuple[int, str]] = []
    basis = np.empty((data.nT, 0))
    for col, prov in zip(candidates, provenance):
        scale = np.linalg.norm(col)
        if scale == 0:
            continue
        unit = col / scale
        resid = unit - basis @ (basis.T @ unit)
        # second pass clears the float residue a single projection
        # leaves on nearly dependent columns
        resid = resid - basis @ (basis.T @ resid)
        rnorm = np.linalg.norm(resid)
        if rnorm > _PRUNE_TOL:
            kept_cols.append(col)
            kept_prov.append(prov)
            basis = np.column_stack([basis, resid / rnorm])
    L = len(kept_cols)
    if L <= data.K:
        raise UnderIdentifiedError(
            f"under-identified: increase q or covariates "
            f"(kept {L} instruments for {data.K} covariates)"
        )
    h = np.column_stack(kept_cols)
    return InstrumentSet(h=h, q=q, kept_columns=tuple(kept_prov), basis=basis)


def projection_apply(instruments: InstrumentSet, v: np.ndarray) -> np.ndarray:
    """Project v onto the instrument span via the stored orthonormal basis."""
    basis = instruments.basis
    if basis is None:
        basis, _ = scipy.linalg.qr(instruments.h, mode="economic")
    return basis @ (basis.T @ np.asarray(v, dtype=float))


@dataclass(frozen=True)
class RobustFit:
    """Result of the instrumented fit.

    ``delta_hat`` stacks the K covariate coefficients first, then the n
    region coefficients. ``cov`` is the heteroskedasticity-consistent
    sandwich; ``cov_unit_innovations`` is the same map with the
    innovation variance replaced by the identity.
    """

    delta_hat: np.ndarray
    cov: np.ndarray
    cov_unit_innovations: np.ndarray
    rho_in_range: np.ndarray
    diagnostics: dict
    instruments: InstrumentSet
    covariates: tuple
    region_ids: tuple

    @property
    def K(self) -> int:
        return len(self.covariates)

    @property
    def beta_hat(self) -> np.ndarray:
        return self.delta_hat[: self.K]

    @property
    def rho_hat(self) -> np.ndarray:
        return self.delta_hat[self.K :]


def fit_robust(
    data: PanelDataset,
    w: WeightsMatrix,
    q: int = 2,
    instruments: InstrumentSet | None = None,
) -> RobustFit:
    """Estimate (beta, rho) by projected least squares on [X, P_H D].

    Parameters
    ----------
    data : PanelDataset
    w : WeightsMatrix
    q : int
        Highest weight power in the instrument block; ignored when an
        explicit ``instruments`` set is supplied.
    instruments : InstrumentSet, optional
        Pre-built instruments (e.g. rescaled ones in tests).

    Returns
    -------
    RobustFit
        Region coefficients are not constrained to [-1, 1]; estimates
        outside that interval are flagged in ``rho_in_range``, not
        rejected.
    """
    if instruments is None:
        instruments = build_instruments(data, w, q)
    n, K = data.n, data.K
    if instruments.L < K + n:
        raise UnderIdentifiedError(
            f"under-identified: increase q or covariates "
            f"({instruments.L} instruments for {K + n} coefficients)"
        )
    d = spatial_lag_regressors(w, data)
    z = np.column_stack([data.x, projection_apply(instruments, d)])
    # X lies in the instrument span, so P_H Z = Z and the estimator is
    # the least-squares solve of Y on Z; QR keeps the conditioning at
    # cond(Z) instead of cond(Z)^2 from the explicit normal equations.
    qz, rz = scipy.linalg.qr(z, mode="economic")
    rdiag = np.abs(np.diag(rz))
    hth = instruments.h.T @ instruments.h
    with np.errstate(over="ignore"):
        cond_rz = float(np.linalg.cond(rz))
        diagnostics = {
            "cond_hth": float(np.linalg.cond(hth)),
            "cond_normal": cond_rz**2 if np.isfinite(cond_rz) else float("inf"),
            "L": instruments.L,
        }
    if rdiag.min() <= 1e-12 * rdiag.max():
        raise EstimationError(
            f"singular normal equations (cond HtH {diagnostics['cond_hth']:.3g}, "
            f"cond (P_H Z)'Z {diagnostics['cond_normal']:.3g})"
        )
    delta = scipy.linalg.solve_triangular(rz, qz.T @ data.y)
    if not np.all(np.isfinite(delta)):
        raise EstimationError(
            f"singular normal equations (cond HtH {diagnostics['cond_hth']:.3g}, "
            f"cond (P_H Z)'Z {diagnostics['cond_normal']:.3g})"
        )

    # delta_hat - delta = B eps exactly, with B = normal^{-1} (P_H Z)'.
    bmap = scipy.linalg.solve_triangular(rz, qz.T)
    resid = data.y - data.x @ delta[:K] - d @ delta[K:]
    cov = (bmap * resid**2) @ bmap.T
    cov_unit = bmap @ bmap.T
    cov = 0.5 * (cov + cov.T)
    cov_unit = 0.5 * (cov_unit + cov_unit.T)
    rho = delta[K:]
    return RobustFit(
        delta_hat=delta,
        cov=cov,
        cov_unit_innovations=cov_unit,
        rho_in_range=np.abs(rho) <= 1.0,
        diagnostics=diagnostics,
        instruments=instruments,
        covariates=data.covariates,
        region_ids=data.region_ids,
    )
