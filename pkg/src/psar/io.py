"""File formats: weights matrices, balanced panel CSVs, JSON reports."""
from __future__ import annotations

import csv
import io as _stdio
import json
import re
import sys
from importlib.resources import files as _pkg_files

import numpy as np
import pandas as pd

from .inference import CommonRhoFit, HomogeneityTest, wald_table
from .ml import MlFit
from .panel import PanelDataset, PanelError
from .robust import RobustFit
from .simulation import McResult
from .weights import WeightsError, WeightsMatrix, row_standardize

__all__ = [
    "REPORT_SCHEMA",
    "load_weights",
    "parse_weights_text",
    "load_panel",
    "add_response_lag",
    "as_payload",
    "write_report",
    "write_params_csv",
    "us_snapshot",
]

REPORT_SCHEMA = "psar-report/1"


def _clean_lines(text: str):
    out = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        out.append(stripped)
    return out


def _parse_adjacency(lines) -> WeightsMatrix:
    order, nbrs = [], {}
    for line in lines:
        rid, sep, rest = line.partition(":")
        rid = rid.strip()
        if not sep or not rid:
            raise WeightsError(f"bad adjacency line {line!r}")
        if rid in nbrs:
            raise WeightsError(f"region {rid!r} listed twice")
        order.append(rid)
        nbrs[rid] = [tok for tok in re.split(r"[,\s]+", rest.strip()) if tok]
    index = {rid: i for i, rid in enumerate(order)}
    raw = np.zeros((len(order), len(order)))
    for rid, neighbors in nbrs.items():
        for other in neighbors:
            if other == rid:
                raise WeightsError(f"region {rid!r} lists itself as a neighbor")
            if other not in index:
                raise WeightsError(f"region {rid!r} has unknown neighbor {other!r}")
            raw[index[rid], index[other]] = 1.0
    return row_standardize(raw, tuple(order))


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _parse_dense(lines) -> WeightsMatrix:
    rows = [row for row in csv.reader(lines)]
    if not rows:
        raise WeightsError("weights file is empty")
    first = [cell.strip() for cell in rows[0]]
    if all(_is_number(cell) for cell in first):
        ids = tuple(f"r{i}" for i in range(len(rows)))
        data_rows = rows
        labeled = False
    else:
        body = rows[1:]
        if not body:
            raise WeightsError("weights file has a header but no rows")
        labeled = not _is_number(body[0][0].strip())
        if labeled:
            # header may or may not carry a corner cell over the labels
            ids = tuple(first[1:]) if len(first) == len(body[0]) else tuple(first)
        else:
            ids = tuple(first)
        data_rows = body
    n = len(ids)
    raw = np.zeros((n, n))
    for i, row in enumerate(data_rows):
        cells = [cell.strip() for cell in row]
        if labeled:
            label, cells = cells[0], cells[1:]
            if label != str(ids[i]):
                raise WeightsError(
                    f"row {i} is labeled {label!r} but the header says {ids[i]!r}"
                )
        if len(cells) != n:
            raise WeightsError(f"row {i} has {len(cells)} cells, expected {n}")
        try:
            raw[i] = [float(cell) for cell in cells]
        except ValueError as exc:
            raise WeightsError(f"row {i} has a non-numeric cell: {exc}") from None
    if len(data_rows) != n:
        raise WeightsError(f"{len(data_rows)} rows for {n} columns")
    return row_standardize(raw, ids)


def parse_weights_text(text: str) -> WeightsMatrix:
    """Parse adjacency-list or dense CSV weights from a string."""
    lines = _clean_lines(text)
    if not lines:
        raise WeightsError("weights file is empty")
    if any(":" in line for line in lines):
        return _parse_adjacency(lines)
    return _parse_dense(lines)


def load_weights(path) -> WeightsMatrix:
    """Read spatial weights from an adjacency list or a dense CSV.

    Adjacency lines look like ``id: neighbor, neighbor``; anything else
    is treated as a dense matrix with an optional header row and
    optional row labels. Raw entries are row-standardized.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return parse_weights_text(fh.read())


def _time_sort_key(values):
    try:
        return sorted(set(values), key=float)
    except (TypeError, ValueError):
        return sorted(set(values), key=str)


def add_response_lag(data: PanelDataset, name: str = "y_lag") -> PanelDataset:
    """Append the previous period's response as the last covariate.

    The first period has no predecessor and is dropped, so the result
    covers T - 1 periods.
    """
    if data.T < 2:
        raise PanelError("need at least two periods to lag the response")
    if name in data.covariates:
        raise PanelError(f"covariate {name!r} already exists")
    lag = data.y_blocks()[:-1].ravel()
    keep = slice(data.n, None)
    return PanelDataset(
        y=data.y[keep],
        x=np.column_stack([data.x[keep], lag]),
        n=data.n,
        T=data.T - 1,
        region_ids=data.region_ids,
        time_ids=tuple(data.time_ids[1:]),
        covariates=data.covariates + (name,),
    )


def load_panel(
    source,
    weights: WeightsMatrix,
    response: str,
    covariates=None,
    region_col: str = "region",
    time_col: str = "time",
    intercept: bool = True,
) -> PanelDataset:
    """Build a time-major dataset from a long CSV (or DataFrame).

    Region labels must match the weights matrix exactly (as strings)
    and every region/time pair must appear exactly once. Column order
    follows ``covariates`` (default: every other column in file order),
    with an intercept prepended unless disabled.
    """
    if isinstance(source, pd.DataFrame):
        frame = source.copy()
    else:
        frame = pd.read_csv(source)
    for col in (region_col, time_col, response):
        if col not in frame.columns:
            raise PanelError(f"panel file has no column {col!r}")
    if covariates is None:
        covariates = [
            c for c in frame.columns if c not in (region_col, time_col, response)
        ]
    else:
        covariates = list(covariates)
        missing = [c for c in covariates if c not in frame.columns]
        if missing:
            raise PanelError(f"panel file has no column(s) {missing}")

    frame = frame.copy()
    frame[region_col] = frame[region_col].astype(str)
    want_regions = tuple(str(r) for r in weights.region_ids)
    have_regions = set(frame[region_col])
    extra = sorted(have_regions - set(want_regions))
    absent = sorted(set(want_regions) - have_regions)
    if extra or absent:
        parts = []
        if absent:
            parts.append(f"regions missing from the panel: {absent}")
        if extra:
            parts.append(f"regions not in the weights: {extra}")
        raise PanelError("; ".join(parts))

    times = _time_sort_key(frame[time_col])
    frame = frame.set_index([time_col, region_col])
    if frame.index.has_duplicates:
        dups = frame.index[frame.index.duplicated()].tolist()[:10]
        raise PanelError(f"duplicate region/time rows: {dups}")
    full = pd.MultiIndex.from_product([times, want_regions], names=[time_col, region_col])
    missing_pairs = full.difference(frame.index)
    if len(missing_pairs):
        shown = [tuple(p) for p in missing_pairs[:10]]
        raise PanelError(
            f"panel is not balanced: {len(missing_pairs)} region/time pair(s) "
            f"missing, first {shown}"
        )
    frame = frame.reindex(full)

    y = frame[response].to_numpy(dtype=float)
    columns = [frame[c].to_numpy(dtype=float) for c in covariates]
    names = list(covariates)
    if intercept:
        columns.insert(0, np.ones(len(frame)))
        names.insert(0, "intercept")
    x = np.column_stack(columns) if columns else np.empty((len(frame), 0))
    return PanelDataset(
        y=y,
        x=x,
        n=weights.n,
        T=len(times),
        region_ids=want_regions,
        time_ids=tuple(times),
        covariates=tuple(names),
    )


def _listify(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def as_payload(obj, **extra) -> dict:
    """JSON-ready dict for a fit, test or Monte Carlo result."""
    if isinstance(obj, MlFit):
        body = {
            "kind": "ml_fit",
            "converged": bool(obj.converged),
            "iterations": int(obj.iterations),
            "loglik": float(obj.loglik),
            "sigma2_hat": float(obj.sigma2_hat),
            "covariates": list(obj.covariates),
            "region_ids": [str(r) for r in obj.region_ids],
            "beta_hat": _listify(obj.beta_hat),
            "rho_hat": _listify(obj.rho_hat),
            "beta_cov": _listify(obj.beta_cov),
            "rho_cov": _listify(obj.rho_cov),
        }
    elif isinstance(obj, RobustFit):
        body = {
            "kind": "robust_fit",
            "covariates": list(obj.covariates),
            "region_ids": [str(r) for r in obj.region_ids],
            "beta_hat": _listify(obj.beta_hat),
            "rho_hat": _listify(obj.rho_hat),
            "rho_in_range": _listify(obj.rho_in_range),
            "cov": _listify(obj.cov),
            "cov_unit_innovations": _listify(obj.cov_unit_innovations),
            "diagnostics": {k: float(v) for k, v in obj.diagnostics.items()},
        }
    elif isinstance(obj, CommonRhoFit):
        body = {
            "kind": "common_rho_fit",
            "rho_hat": float(obj.rho_hat),
            "variance": float(obj.variance),
            "beta_hat": _listify(obj.beta_hat),
            "sigma2_hat": float(obj.sigma2_hat),
            "loglik": float(obj.loglik),
            "at_boundary": bool(obj.at_boundary),
            "covariates": list(obj.covariates),
        }
    elif isinstance(obj, HomogeneityTest):
        body = {
            "kind": "homogeneity_test",
            "t_squared": float(obj.t_squared),
            "f_statistic": float(obj.f_statistic),
            "df1": int(obj.df1),
            "df2": float(obj.df2),
            "p_value": float(obj.p_value),
            "rho_common": float(obj.rho_common),
            "contrast": _listify(obj.contrast),
            "region_ids": [str(r) for r in obj.region_ids],
        }
    elif isinstance(obj, McResult):
        body = {
            "kind": "monte_carlo",
            "reps": int(obj.reps),
            "summary": obj.summary.to_dict(orient="records"),
            "failures": obj.failures.to_dict(orient="records"),
        }
    elif isinstance(obj, pd.DataFrame):
        body = {"kind": "table", "rows": obj.to_dict(orient="records")}
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    payload = {"schema": REPORT_SCHEMA}
    payload.update(body)
    payload.update(extra)
    return payload


def write_report(payload: dict, destination) -> None:
    """Write a payload as indented JSON to a path or ``-`` for stdout."""
    text = json.dumps(payload, indent=2) + "\n"
    if destination == "-":
        sys.stdout.write(text)
        return
    with open(destination, "w", encoding="utf-8") as fh:
        fh.write(text)


def write_params_csv(fit, destination) -> None:
    """Write the per-parameter Wald table as CSV."""
    table = wald_table(fit)
    if destination == "-":
        table.to_csv(sys.stdout, index=False)
        return
    table.to_csv(destination, index=False)


def us_snapshot():
    """Packaged state-level panel and its contiguity weights.

    Returns (dataset, weights) with the lagged response already added
    as the final covariate ``y_lag``.
    """
    base = _pkg_files("psar").joinpath("data")
    w = parse_weights_text(
        base.joinpath("us_state_adjacency.txt").read_text(encoding="utf-8")
    )
    frame = pd.read_csv(
        _stdio.StringIO(base.joinpath("us_homicide_panel.csv").read_text(encoding="utf-8"))
    )
    data = load_panel(frame, w, response="y")
    return add_response_lag(data), w
