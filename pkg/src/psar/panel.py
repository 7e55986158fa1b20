"""Balanced panel container with time-major stacking.

The response and design matrix are stored as flat arrays of length n*T
(respectively n*T x K) where the row for region i at period t sits at
index t*n + i: all regions for period 1, then all regions for period 2,
and so on. Every block operation in the package relies on this layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["PanelError", "PanelDataset"]

_RANK_TOL = 1e-10


class PanelError(ValueError):
    """Raised for malformed panel data."""


def _first_collinear_column(x: np.ndarray, names: tuple) -> str | None:
    """Name of the first column linearly dependent on its predecessors."""
    basis = np.empty((x.shape[0], 0))
    for k in range(x.shape[1]):
        col = x[:, k]
        scale = np.linalg.norm(col)
        if scale == 0:
            return names[k]
        resid = col - basis @ (basis.T @ col)
        if np.linalg.norm(resid) <= _RANK_TOL * scale:
            return names[k]
        basis = np.column_stack([basis, resid / np.linalg.norm(resid)])
    return None


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel: y (n*T,), x (n*T, K), time-major row order.

    Parameters
    ----------
    y : np.ndarray
        Stacked response, length n*T.
    x : np.ndarray
        Stacked covariates, n*T x K, full column rank.
    n, T : int
        Number of regions and time periods.
    region_ids : tuple
        Region labels, length n, in stacking order.
    time_ids : tuple
        Period labels, length T, in stacking order.
    covariates : tuple
        Covariate names, length K, unique.
    """

    y: np.ndarray
    x: np.ndarray
    n: int
    T: int
    region_ids: tuple = field(default=None)
    time_ids: tuple = field(default=None)
    covariates: tuple = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise PanelError(f"x must be 2-D, got shape {x.shape}")
        n, T = int(self.n), int(self.T)
        if n < 2 or T < 1:
            raise PanelError(f"need n >= 2 and T >= 1, got n={n}, T={T}")
        if y.shape[0] != n * T:
            raise PanelError(f"y has {y.shape[0]} rows, expected n*T = {n * T}")
        if x.shape[0] != n * T:
            raise PanelError(f"x has {x.shape[0]} rows, expected n*T = {n * T}")
        if x.shape[1] < 1:
            raise PanelError("x needs at least one column")
        if not np.all(np.isfinite(y)):
            raise PanelError("y contains non-finite values")
        if not np.all(np.isfinite(x)):
            raise PanelError("x contains non-finite values")

        region_ids = self.region_ids
        if region_ids is None:
            region_ids = tuple(str(i) for i in range(n))
        else:
            region_ids = tuple(region_ids)
            if len(region_ids) != n or len(set(region_ids)) != n:
                raise PanelError("region_ids must be n unique labels")
        time_ids = self.time_ids
        if time_ids is None:
            time_ids = tuple(range(T))
        else:
            time_ids = tuple(time_ids)
            if len(time_ids) != T or len(set(time_ids)) != T:
                raise PanelError("time_ids must be T unique labels")
        covariates = self.covariates
        if covariates is None:
            covariates = tuple(f"x{k}" for k in range(x.shape[1]))
        else:
            covariates = tuple(covariates)
            if len(covariates) != x.shape[1]:
                raise PanelError(
                    f"{len(covariates)} covariate names for {x.shape[1]} columns"
                )
            if len(set(covariates)) != len(covariates):
                raise PanelError("duplicate covariate names")

        bad = _first_collinear_column(x, covariates)
        if bad is not None:
            raise PanelError(f"covariate {bad!r} is collinear with earlier columns")

        y = y.copy()
        x = x.copy()
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "region_ids", region_ids)
        object.__setattr__(self, "time_ids", time_ids)
        object.__setattr__(self, "covariates", covariates)

    @property
    def K(self) -> int:
        return self.x.shape[1]

    @property
    def nT(self) -> int:
        return self.n * self.T

    def y_blocks(self) -> np.ndarray:
        """Response reshaped to (T, n): row t holds period t."""
        return self.y.reshape(self.T, self.n)
