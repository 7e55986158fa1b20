"""Block operations for the region-specific spatial filter.

The model stacks T periods of n regions (time-major) and filters the
response with

    A = I_nT - (I_T (x) W diag(rho)),

where rho holds one autoregressive coefficient per region and W is
row-standardized. A is block diagonal with T identical n x n blocks
S = I_n - W diag(rho), so every operation here works per time block and
no nT x nT matrix is ever materialized:

* ``spatial_filter``      applies A (or its transpose) to a vector,
* ``filter_log_det``      returns ln|A| = T ln|S| via an n x n LU,
* ``spatial_solve``       applies A^{-1} blockwise,
* ``spatial_inverse``     returns the n x n multiplier (I_n - W diag(rho))^{-1}.

Strict diagonal dominance of S (unit diagonal, off-diagonal row sums at
most max|rho_i| < 1) guarantees invertibility and a positive determinant.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .weights import WeightsMatrix

__all__ = [
    "SpatialFilterError",
    "check_rho",
    "spatial_filter",
    "filter_log_det",
    "spatial_solve",
    "spatial_inverse",
]


class SpatialFilterError(ValueError):
    """Raised for invalid coefficients or singular filter blocks."""


def check_rho(rho: np.ndarray, n: int, strict: bool = True) -> np.ndarray:
    """Validate a region-coefficient vector.

    With ``strict`` the open-interval bound max|rho_i| < 1 is enforced,
    which is the invertibility regime of the filter.
    """
    rho = np.asarray(rho, dtype=float).ravel()
    if rho.shape[0] != n:
        raise SpatialFilterError(f"rho has {rho.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(rho)):
        raise SpatialFilterError("rho contains non-finite values")
    if strict and np.max(np.abs(rho)) >= 1.0:
        i = int(np.argmax(np.abs(rho)))
        raise SpatialFilterError(
            f"|rho[{i}]| = {abs(rho[i])!r} >= 1; filter not guaranteed invertible"
        )
    return rho


def _blockwise(mat: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Apply (I_T (x) mat) to a stacked vector or matrix v."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] % n != 0:
        raise SpatialFilterError(f"vector length {v.shape[0]} not a multiple of n={n}")
    T = v.shape[0] // n
    if v.ndim == 1:
        return (v.reshape(T, n) @ mat.T).ravel()
    blocks = v.reshape(T, n, v.shape[1])
    return np.matmul(mat, blocks).reshape(v.shape)


def spatial_filter(
    rho: np.ndarray, w: WeightsMatrix, v: np.ndarray, transpose: bool = False
) -> np.ndarray:
    """Apply A = I - (I_T (x) W diag(rho)) to a stacked vector.

    Parameters
    ----------
    rho : np.ndarray
        Region coefficients, max|rho_i| < 1.
    w : WeightsMatrix
    v : np.ndarray
        Stacked (n*T,) vector or (n*T, m) matrix, time-major.
    transpose : bool
        Apply A' instead of A.

    Returns
    -------
    np.ndarray with the shape of ``v``.
    """
    rho = check_rho(rho, w.n)
    wp = w.w * rho[None, :]
    if transpose:
        wp = wp.T
    return np.asarray(v, dtype=float) - _blockwise(wp, v, w.n)


def _filter_block(rho: np.ndarray, w: WeightsMatrix) -> np.ndarray:
    return np.eye(w.n) - w.w * rho[None, :]


def filter_log_det(rho: np.ndarray, w: WeightsMatrix, T: int) -> float:
    """ln|A| = T * ln det(I_n - W diag(rho)), via LU on the n x n block."""
    rho = check_rho(rho, w.n)
    if T < 1:
        raise SpatialFilterError(f"T must be positive, got {T}")
    sign, logabs = np.linalg.slogdet(_filter_block(rho, w))
    if sign <= 0 or not np.isfinite(logabs):
        raise SpatialFilterError("filter block is singular or has negative determinant")
    return float(T * logabs)


def spatial_solve(rho: np.ndarray, w: WeightsMatrix, v: np.ndarray) -> np.ndarray:
    """Apply A^{-1} to a stacked vector, one LU shared across time blocks."""
    rho = check_rho(rho, w.n)
    v = np.asarray(v, dtype=float)
    n = w.n
    if v.shape[0] % n != 0:
        raise SpatialFilterError(f"vector length {v.shape[0]} not a multiple of n={n}")
    T = v.shape[0] // n
    lu, piv = scipy.linalg.lu_factor(_filter_block(rho, w))
    if v.ndim == 1:
        rhs = v.reshape(T, n).T
        return scipy.linalg.lu_solve((lu, piv), rhs).T.ravel()
    m = v.shape[1]
    rhs = v.reshape(T, n, m).transpose(1, 0, 2).reshape(n, T * m)
    out = scipy.linalg.lu_solve((lu, piv), rhs)
    return out.reshape(n, T, m).transpose(1, 0, 2).reshape(v.shape)


def spatial_inverse(rho: np.ndarray, w: WeightsMatrix) -> np.ndarray:
    """The n x n multiplier matrix (I_n - W diag(rho))^{-1}."""
    rho = check_rho(rho, w.n)
    block = _filter_block(rho, w)
    try:
        return scipy.linalg.solve(block, np.eye(w.n))
    except scipy.linalg.LinAlgError as exc:
        raise SpatialFilterError("filter block is singular") from exc
