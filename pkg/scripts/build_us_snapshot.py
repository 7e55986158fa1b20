"""Regenerate the bundled state-level snapshot under src/psar/data/.

The shipped panel is synthetic. It is drawn from the package's own
model on the contiguous-48 border graph, with region coefficients,
covariate scales and noise level chosen to look like annual state
crime-rate panels. Regenerating with the same seed is bit-stable.

Usage:
    python3 scripts/build_us_snapshot.py [--seed N] [--check-only]
"""
from __future__ import annotations

import argparse
import io
import pathlib
import sys

import numpy as np
import pandas as pd

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from psar import (  # noqa: E402
    fit_common_rho,
    fit_ml,
    fit_robust,
    homogeneity_test,
    impact_summary,
    load_panel,
    add_response_lag,
    parse_weights_text,
)

DATA_DIR = pathlib.Path(__file__).resolve().parents[1] / "src" / "psar" / "data"

# Land-border contiguity for the 48 conterminous states. Corner-only
# contacts (AZ-CO, NM-UT) are not edges; DC, AK and HI are excluded.
EDGES = """
AL-FL AL-GA AL-MS AL-TN
AR-LA AR-MS AR-MO AR-OK AR-TN AR-TX
AZ-CA AZ-NV AZ-NM AZ-UT
CA-NV CA-OR
CO-KS CO-NE CO-NM CO-OK CO-UT CO-WY
CT-MA CT-NY CT-RI
DE-MD DE-NJ DE-PA
FL-GA
GA-NC GA-SC GA-TN
IA-IL IA-MN IA-MO IA-NE IA-SD IA-WI
ID-MT ID-NV ID-OR ID-UT ID-WA ID-WY
IL-IN IL-KY IL-MO IL-WI
IN-KY IN-MI IN-OH
KS-MO KS-NE KS-OK
KY-MO KY-OH KY-TN KY-VA KY-WV
LA-MS LA-TX
MA-NH MA-NY MA-RI MA-VT
MD-PA MD-VA MD-WV
ME-NH
MI-OH MI-WI
MN-ND MN-SD MN-WI
MO-NE MO-OK MO-TN
MS-TN
MT-ND MT-SD MT-WY
NC-SC NC-TN NC-VA
ND-SD
NE-SD NE-WY
NH-VT
NJ-NY NJ-PA
NM-OK NM-TX
NV-OR NV-UT
NY-PA NY-VT
OH-PA OH-WV
OK-TX
OR-WA
PA-WV
SD-WY
TN-VA
UT-WY
VA-WV
""".split()

# Region coefficient pattern: strongly heterogeneous, eleven negative,
# two near-explosive values trimmed into the generator's stable range.
RHO_PATTERN = {
    "WA": -0.931, "ME": -0.917, "MD": -0.229, "NE": -0.218, "NM": -0.142,
    "NY": -0.075, "KS": -0.060, "LA": -0.032, "CT": -0.015, "SD": -0.015,
    "MI": -0.009, "CO": 0.023, "IL": 0.030, "MN": 0.066, "AL": 0.120,
    "WY": 0.124, "MT": 0.142, "SC": 0.164, "MS": 0.165, "MO": 0.165,
    "ND": 0.173, "ID": 0.184, "NH": 0.197, "IN": 0.206, "NV": 0.207,
    "VA": 0.209, "GA": 0.209, "WI": 0.214, "AZ": 0.241, "NC": 0.268,
    "PA": 0.270, "TN": 0.286, "KY": 0.297, "TX": 0.306, "OR": 0.315,
    "FL": 0.321, "MA": 0.384, "DE": 0.402, "OK": 0.456, "VT": 0.464,
    "CA": 0.476, "RI": 0.476, "WV": 0.476, "OH": 0.510, "NJ": 0.727,
    "AR": 0.735, "IA": 0.953, "UT": 0.964,
}

RHO_CLIP = 0.75
BETA = {"intercept": 1.75, "poverty": 0.18, "income": -0.005, "y_lag": 0.742}
SIGMA2 = 0.806
ROBUST_Q = 24  # depth 17 identifies but is weak; 24 trades little bias for noise
TARGET_MEAN_ROWSUM = 0.9454 / 0.7393  # implied equilibrium feedback level
YEARS = range(1980, 2024)
BURN_IN = 31  # generate from 1949 so the start year is forgotten


def build_adjacency_text() -> str:
    states = sorted(RHO_PATTERN)
    nbrs = {s: set() for s in states}
    for edge in EDGES:
        a, b = edge.split("-")
        nbrs[a].add(b)
        nbrs[b].add(a)
    assert len(EDGES) == 105 and sum(len(v) for v in nbrs.values()) == 210
    lines = ["# Contiguous-48 state land borders (row: state, neighbors)."]
    for s in states:
        lines.append(f"{s}: {', '.join(sorted(nbrs[s]))}")
    return "\n".join(lines) + "\n"


def shifted_rho(w, shift: float) -> np.ndarray:
    base = np.array([RHO_PATTERN[s] for s in w.region_ids])
    return np.clip(base + shift, -RHO_CLIP, RHO_CLIP)


def multiplier(w, rho: np.ndarray) -> np.ndarray:
    return np.linalg.inv(np.eye(w.n) - w.w * rho[None, :])


def solve_shift(w) -> float:
    from scipy.optimize import brentq

    def gap(shift):
        return multiplier(w, shifted_rho(w, shift)).sum(axis=1).mean() - TARGET_MEAN_ROWSUM

    return brentq(gap, -0.1, 0.12, xtol=1e-12)


def simulate_panel(w, rho: np.ndarray, seed: int) -> pd.DataFrame:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    n = w.n
    years = list(YEARS)
    total = BURN_IN + len(years)

    # Covariates carry most of the exogenous movement: a shared slow
    # poverty cycle plus persistent state wiggles, and real income with
    # secular growth and occasional recession dips. Scales mimic percent
    # poor and annual income in hundreds of dollars.
    pov_base = rng.uniform(11.0, 17.0, n)
    inc_base = rng.uniform(520.0, 600.0, n)
    steps = np.arange(total)
    pov_cycle = 2.5 * np.sin(2.0 * np.pi * (steps - 8.0) / 34.0)
    inc_growth = 130.0 * steps / total
    recession = np.zeros(total)
    for start, depth in ((8, 30.0), (32, 35.0), (58, 45.0)):
        if start < total:
            recession[start:] += -depth * 0.45 ** np.arange(total - start)
    pov = np.empty((total, n))
    inc = np.empty((total, n))
    pov[0] = pov_base + rng.normal(0.0, 2.2, n)
    inc[0] = inc_base + rng.normal(0.0, 18.0, n)
    for t in range(1, total):
        pov[t] = pov_base + 0.45 * (pov[t - 1] - pov_base) + rng.normal(0.0, 2.2, n)
        inc[t] = inc_base + 0.50 * (inc[t - 1] - inc_base) + rng.normal(0.0, 18.0, n)
    pov = np.clip(pov + pov_cycle[:, None], 3.0, None)
    inc = inc + (inc_growth + recession)[:, None]

    mult = multiplier(w, rho)
    feedback = BETA["y_lag"] * mult
    radius = np.abs(np.linalg.eigvals(feedback)).max()
    if radius >= 0.985:
        raise SystemExit(f"unstable generator: spectral radius {radius:.3f}")

    drive0 = BETA["intercept"] + BETA["poverty"] * pov[0] + BETA["income"] * inc[0]
    start = np.linalg.solve(np.eye(n) - feedback, mult @ drive0)

    y = np.empty((total, n))
    prev = start + rng.normal(0.0, 1.0, n)
    for t in range(total):
        drive = (
            BETA["intercept"]
            + BETA["poverty"] * pov[t]
            + BETA["income"] * inc[t]
            + BETA["y_lag"] * prev
            + rng.normal(0.0, np.sqrt(SIGMA2), n)
        )
        y[t] = mult @ drive
        prev = y[t]

    rows = []
    for k, year in enumerate(years):
        t = BURN_IN + k
        for i, state in enumerate(w.region_ids):
            rows.append(
                {
                    "region": state,
                    "time": year,
                    "y": y[t, i],
                    "poverty": pov[t, i],
                    "income": inc[t, i],
                }
            )
    return pd.DataFrame(rows)


def check(frame: pd.DataFrame, adjacency_text: str, rho: np.ndarray, verbose=True):
    w = parse_weights_text(adjacency_text)
    data = add_response_lag(load_panel(frame, w, response="y"))
    ml = fit_ml(data, w)
    lag_ix = data.covariates.index("y_lag")
    impacts = impact_summary(w, ml.rho_hat, ml.beta_hat, data.covariates)
    lag_row = impacts[impacts.covariate == "y_lag"].iloc[0]
    rob = fit_robust(data, w, q=ROBUST_Q)
    common = fit_common_rho(data, w)
    hom = homogeneity_test(data, w, ml_fit=ml, common_fit=common)

    checks = [
        ("y positive", bool(frame.y.min() > 0.0), None),
        ("ml converged", ml.converged, None),
        ("ml lag", ml.beta_hat[lag_ix], (0.7393, 0.02)),
        ("ml sigma2", ml.sigma2_hat, (0.8060, 0.05)),
        ("direct", lag_row.direct, (0.7442, 0.03)),
        ("indirect", lag_row.indirect, (0.2013, 0.03)),
        ("total", lag_row.total, (0.9454, 0.03)),
        ("robust lag", rob.beta_hat[lag_ix], (0.7229, 0.02)),
        ("hom p<1e-4", hom.p_value, None),
    ]
    ok = True
    for name, value, window in checks:
        if window is None:
            good = bool(value) if isinstance(value, (bool, np.bool_)) else value < 1e-4
        else:
            center, tol = window
            good = abs(value - center) <= tol
        ok &= good
        if verbose:
            shown = f"{value:.4f}" if not isinstance(value, (bool, np.bool_)) else value
            print(f"  {name:12} {shown}  {'ok' if good else 'MISS'}")
    if verbose:
        print(f"  rho err max   {np.abs(ml.rho_hat - rho).max():.4f}")
        print(f"  t-squared     {hom.t_squared:.1f}  (p {hom.p_value:.3g})")
    return ok


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=1019)
    parser.add_argument("--scan", type=int, default=0, help="try this many seeds")
    parser.add_argument("--check-only", action="store_true")
    args = parser.parse_args()

    adjacency_text = build_adjacency_text()
    w = parse_weights_text(adjacency_text)
    shift = solve_shift(w)
    rho = shifted_rho(w, shift)
    mult = multiplier(w, rho)
    print(f"shift {shift:+.6f}  mean diag {np.diag(mult).mean():.5f}  "
          f"mean rowsum {mult.sum(axis=1).mean():.5f}")

    if args.scan:
        for seed in range(args.seed, args.seed + args.scan):
            frame = simulate_panel(w, rho, seed)
            print(f"seed {seed}:")
            if check(frame, adjacency_text, rho):
                print(f"seed {seed} passes all windows")
        return 0

    frame = simulate_panel(w, rho, args.seed)
    ok = check(frame, adjacency_text, rho)
    if args.check_only:
        return 0 if ok else 1
    if not ok:
        print("windows missed; not writing", file=sys.stderr)
        return 1
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    (DATA_DIR / "us_state_adjacency.txt").write_text(adjacency_text, encoding="utf-8")
    buf = io.StringIO()
    frame.to_csv(buf, index=False)
    (DATA_DIR / "us_homicide_panel.csv").write_text(buf.getvalue(), encoding="utf-8")
    print(f"wrote {DATA_DIR}/us_state_adjacency.txt and us_homicide_panel.csv "
          f"(seed {args.seed})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
