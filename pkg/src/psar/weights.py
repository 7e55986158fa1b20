"""Spatial weight matrices: construction, validation, standardization.

Conventions used throughout the package:

* ``W`` is n x n, nonnegative, with a zero diagonal, and row-standardized:
  every row sums to one, so the spatial lag ``W y`` is a weighted average
  of neighboring values.
* Region order is positional. Whenever a weights matrix carries region
  labels (grids and files do), panel rows must be aligned to that order
  before estimation; see :mod:`psar.io`.

Row-standardization is what makes the filtering operator
``I - W diag(rho)`` invertible for ``max |rho_i| < 1``: the diagonal is 1
and each off-diagonal row bundle sums to at most ``max |rho_i|``, so the
matrix is strictly diagonally dominant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WeightsError",
    "WeightsMatrix",
    "row_standardize",
    "grid_weights",
    "build_rook_grid_weights",
]

_ROW_SUM_TOL = 1e-12


class WeightsError(ValueError):
    """Raised for structurally invalid weight matrices."""


@dataclass(frozen=True)
class WeightsMatrix:
    """A validated, row-standardized spatial weights matrix.

    Parameters
    ----------
    w : np.ndarray
        n x n row-standardized weights. Must be nonnegative with a zero
        diagonal; every row sums to one within 1e-12.
    region_ids : tuple, optional
        Region labels in row order. Defaults to stringified indices.
    """

    w: np.ndarray
    region_ids: tuple = field(default=None)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise WeightsError(f"weights must be square, got shape {w.shape}")
        n = w.shape[0]
        if n < 2:
            raise WeightsError("weights need at least two regions")
        if not np.all(np.isfinite(w)):
            raise WeightsError("weights contain non-finite entries")
        if np.any(w < 0):
            i, j = np.argwhere(w < 0)[0]
            raise WeightsError(f"negative weight at ({i}, {j})")
        if np.any(np.diag(w) != 0):
            i = int(np.argwhere(np.diag(w) != 0)[0, 0])
            raise WeightsError(f"nonzero diagonal at region {i}")
        row_sums = w.sum(axis=1)
        bad = np.abs(row_sums - 1.0) > _ROW_SUM_TOL
        if np.any(bad):
            i = int(np.argwhere(bad)[0, 0])
            raise WeightsError(
                f"row {i} sums to {row_sums[i]!r}, expected 1; "
                "pass raw weights through row_standardize first"
            )
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        if self.region_ids is None:
            object.__setattr__(self, "region_ids", tuple(str(i) for i in range(n)))
        else:
            ids = tuple(self.region_ids)
            if len(ids) != n:
                raise WeightsError(
                    f"{len(ids)} region ids for {n} regions"
                )
            if len(set(ids)) != n:
                raise WeightsError("duplicate region ids")
            object.__setattr__(self, "region_ids", ids)

    @property
    def n(self) -> int:
        return self.w.shape[0]


def row_standardize(raw: np.ndarray, region_ids: tuple | None = None) -> WeightsMatrix:
    """Divide each row of a raw nonnegative contiguity matrix by its sum.

    Parameters
    ----------
    raw : np.ndarray
        n x n nonnegative matrix with zero diagonal. Rows with a zero sum
        (isolated regions) are rejected: an isolated region has no
        neighbors and the row cannot be standardized.
    region_ids : tuple, optional
        Region labels in row order.

    Returns
    -------
    WeightsMatrix
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise WeightsError(f"weights must be square, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise WeightsError("weights contain non-finite entries")
    if np.any(raw < 0):
        i, j = np.argwhere(raw < 0)[0]
        raise WeightsError(f"negative weight at ({i}, {j})")
    if np.any(np.diag(raw) != 0):
        i = int(np.argwhere(np.diag(raw) != 0)[0, 0])
        raise WeightsError(f"nonzero diagonal at region {i}")
    sums = raw.sum(axis=1)
    isolated = sums == 0
    if np.any(isolated):
        idx = [int(i) for i in np.argwhere(isolated).ravel()]
        labels = idx if region_ids is None else [region_ids[i] for i in idx]
        raise WeightsError(f"isolated regions (no neighbors): {labels}")
    return WeightsMatrix(raw / sums[:, None], region_ids=region_ids)


def grid_weights(rows: int, cols: int, contiguity: str = "rook") -> WeightsMatrix:
    """Row-standardized contiguity weights on a rows x cols lattice.

    Cells are numbered row-major: cell (r, c) has index r*cols + c.

    Parameters
    ----------
    rows, cols : int
        Lattice dimensions; rows*cols regions.
    contiguity : str
        "rook" for edge-sharing neighbors, "queen" to add the diagonals.
    """
    if contiguity not in ("rook", "queen"):
        raise WeightsError(f"unknown contiguity {contiguity!r}")
    if rows < 1 or cols < 1:
        raise WeightsError("grid dimensions must be positive")
    n = rows * cols
    if n < 2:
        raise WeightsError("1x1 grid has no neighbors possible")
    offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if contiguity == "queen":
        offsets += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    raw = np.zeros((n, n))
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            for dr, dc in offsets:
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    raw[i, rr * cols + cc] = 1.0
    return row_standardize(raw)


def build_rook_grid_weights(rows: int, cols: int) -> WeightsMatrix:
    """Rook-contiguity lattice weights; see :func:`grid_weights`."""
    return grid_weights(rows, cols, contiguity="rook")
