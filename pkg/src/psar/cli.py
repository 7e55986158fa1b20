"""Command-line entry point.

Exit codes: 0 on success, 1 for usage or data errors, 2 when an
iterative fit stops without converging.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import pandas as pd

from .inference import fit_common_rho, homogeneity_test, impact_summary, wald_table
from .io import (
    add_response_lag,
    as_payload,
    load_panel,
    load_weights,
    write_params_csv,
    write_report,
)
from .linalg import SpatialFilterError
from .ml import ScoringConfig, fit_ml
from .panel import PanelError
from .robust import EstimationError, fit_robust
from .simulation import DgpConfig, run_monte_carlo
from .weights import WeightsError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_CONVERGENCE = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; that status is
    # reserved for non-convergence here, so remap to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_ERROR)


def _add_data_args(sub):
    sub.add_argument("--panel", required=True, help="long-format panel CSV")
    sub.add_argument("--weights", required=True, help="adjacency list or dense CSV")
    sub.add_argument("--response", default="y", help="response column (default: y)")
    sub.add_argument(
        "--covariates",
        default=None,
        help="comma-separated column names (default: every other column)",
    )
    sub.add_argument("--region-col", default="region")
    sub.add_argument("--time-col", default="time")
    sub.add_argument(
        "--intercept", action="store_true", help="inject a ones column first"
    )
    sub.add_argument(
        "--lag-response",
        action="store_true",
        help="append the previous period's response as covariate y_lag",
    )


def _add_fit_args(sub):
    sub.add_argument("--q", type=int, default=None, help="instrument power order")
    sub.add_argument("--init", choices=("zeros", "robust"), default="zeros")
    sub.add_argument("--max-iter", type=int, default=200)
    sub.add_argument("--tol", type=float, default=1e-8)
    sub.add_argument("--json", default=None, help="write a JSON report ('-' = stdout)")


def _load_dataset(args):
    w = load_weights(args.weights)
    covs = None
    if args.covariates is not None:
        covs = [c.strip() for c in args.covariates.split(",") if c.strip()]
    data = load_panel(
        args.panel,
        w,
        response=args.response,
        covariates=covs,
        region_col=args.region_col,
        time_col=args.time_col,
        intercept=args.intercept,
    )
    if args.lag_response:
        data = add_response_lag(data)
    return data, w


def _ml_config(args) -> ScoringConfig:
    return ScoringConfig(
        epsilon=args.tol,
        max_iterations=args.max_iter,
        rho_init=args.init,
        robust_q=args.q,
    )


def _column_stats(data) -> dict:
    return {
        "covariate_means": [float(m) for m in data.x.mean(axis=0)],
        "covariate_sds": [float(s) for s in data.x.std(axis=0)],
    }


def _emit(args, obj, extra=None):
    if getattr(args, "json", None):
        write_report(as_payload(obj, **(extra or {})), args.json)


def _say(args, text: str) -> None:
    # keep stdout machine-readable when the JSON report goes there
    stream = sys.stderr if getattr(args, "json", None) == "-" else sys.stdout
    print(text, file=stream)


def _cmd_fit(args) -> int:
    data, w = _load_dataset(args)
    status = EXIT_OK
    extra = _column_stats(data)
    if args.estimator == "ml":
        fit = fit_ml(data, w, _ml_config(args))
        _say(
            args,
            f"ml fit: {'converged' if fit.converged else 'NOT CONVERGED'} "
            f"in {fit.iterations} iterations, loglik {fit.loglik:.6f}, "
            f"sigma2 {fit.sigma2_hat:.6f}",
        )
        _say(args, wald_table(fit).to_string(index=False))
        if not fit.converged:
            status = EXIT_NO_CONVERGENCE
    elif args.estimator == "robust":
        fit = fit_robust(data, w, q=args.q if args.q is not None else 2)
        in_range = int(np.sum(fit.rho_in_range))
        _say(args, f"robust fit: {in_range}/{w.n} coefficients inside [-1, 1]")
        _say(args, wald_table(fit).to_string(index=False))
    else:
        fit = fit_common_rho(data, w)
        _say(
            args,
            f"shared-coefficient fit: rho {fit.rho_hat:.6f} "
            f"(variance {fit.variance:.6g}), sigma2 {fit.sigma2_hat:.6f}, "
            f"loglik {fit.loglik:.6f}",
        )
        if fit.at_boundary:
            _say(args, "warning: estimate sits at the stationarity boundary")

    if args.impacts and args.estimator != "common":
        table = impact_summary(w, fit.rho_hat, fit.beta_hat, data.covariates)
        _say(args, table.to_string(index=False))
        extra["impacts"] = table.to_dict(orient="records")
    if args.test_homogeneity:
        if args.estimator == "ml" and fit.converged:
            test = homogeneity_test(data, w, ml_fit=fit)
        else:
            test = homogeneity_test(data, w)
        _say(
            args,
            f"homogeneity test: T^2 {test.t_squared:.4f}, "
            f"F {test.f_statistic:.4f} on ({test.df1}, {test.df2:.2f}) df, "
            f"p {test.p_value:.6g}",
        )
        extra["homogeneity"] = {
            "t_squared": float(test.t_squared),
            "f_statistic": float(test.f_statistic),
            "df1": int(test.df1),
            "df2": float(test.df2),
            "p_value": float(test.p_value),
        }
    _emit(args, fit, extra)
    if args.params_csv and args.estimator != "common":
        write_params_csv(fit, args.params_csv)
    return status


def _cmd_test(args) -> int:
    data, w = _load_dataset(args)
    ml = fit_ml(data, w, _ml_config(args))
    if not ml.converged:
        print("ml fit did not converge; homogeneity test not run", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    common = fit_common_rho(data, w)
    test = homogeneity_test(data, w, ml_fit=ml, common_fit=common)
    _say(args, f"shared rho estimate: {test.rho_common:.6f}")
    _say(args, f"T^2 statistic:       {test.t_squared:.6f}")
    _say(args, f"F statistic:         {test.f_statistic:.6f}")
    _say(args, f"degrees of freedom:  ({test.df1}, {test.df2:.2f})")
    _say(args, f"p-value:             {test.p_value:.6g}")
    _emit(args, test, _column_stats(data))
    return EXIT_OK


def _cmd_impacts(args) -> int:
    data, w = _load_dataset(args)
    status = EXIT_OK
    if args.estimator == "ml":
        fit = fit_ml(data, w, _ml_config(args))
        if not fit.converged:
            status = EXIT_NO_CONVERGENCE
        rho, beta = fit.rho_hat, fit.beta_hat
    else:
        fit = fit_robust(data, w, q=args.q if args.q is not None else 2)
        rho, beta = fit.rho_hat, fit.beta_hat
    table = impact_summary(w, rho, beta, data.covariates)
    _say(args, table.to_string(index=False))
    _emit(args, table, {"estimator": args.estimator, **_column_stats(data)})
    return status


def _parse_rho_spec(args):
    if args.rho_uniform is not None:
        lo, hi = args.rho_uniform
        return ("uniform", lo, hi)
    if args.rho is None:
        return 0.5
    parts = [p for p in args.rho.split(",") if p.strip()]
    if len(parts) == 1:
        return float(parts[0])
    return np.array([float(p) for p in parts])


def _cmd_simulate(args) -> int:
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("PSAR_SEED", "0"))
    beta = tuple(float(b) for b in args.beta.split(","))
    config = DgpConfig(
        n=args.n,
        T=args.t,
        beta=beta,
        rho_spec=_parse_rho_spec(args),
        innovation=args.innovation,
        sigma2=args.sigma2,
        seed=seed,
        rows=args.rows,
        cols=args.cols,
    )
    estimators = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    result = run_monte_carlo(config, args.reps, estimators=estimators, robust_q=args.q)
    _say(args, f"{args.reps} replicates, seed {seed}")
    if len(result.failures):
        _say(args, f"{len(result.failures)} estimator failure(s) excluded")
    _say(args, result.summary.to_string(index=False))
    if args.records_csv:
        result.records.to_csv(args.records_csv, index=False)
    _emit(args, result)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="psar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="estimate coefficients")
    _add_data_args(fit)
    _add_fit_args(fit)
    fit.add_argument("--estimator", choices=("ml", "robust", "common"), default="ml")
    fit.add_argument(
        "--impacts", action="store_true", help="also print impact decomposition"
    )
    fit.add_argument(
        "--test-homogeneity",
        action="store_true",
        help="also run the shared-coefficient test",
    )
    fit.add_argument("--params-csv", default=None, help="write the parameter table")
    fit.set_defaults(func=_cmd_fit)

    test = sub.add_parser(
        "test", help="test coefficient homogeneity"
    )
    _add_data_args(test)
    _add_fit_args(test)
    test.set_defaults(func=_cmd_test)

    imp = sub.add_parser(
        "impacts", help="direct/indirect/total effects"
    )
    _add_data_args(imp)
    _add_fit_args(imp)
    imp.add_argument("--estimator", choices=("ml", "robust"), default="ml")
    imp.set_defaults(func=_cmd_impacts)

    simu = sub.add_parser(
        "simulate", help="Monte Carlo on synthetic panels"
    )
    simu.add_argument("--n", type=int, required=True)
    simu.add_argument("--t", type=int, required=True)
    simu.add_argument("--reps", type=int, default=100)
    simu.add_argument("--beta", default="1,-1,0.5")
    rho_group = simu.add_mutually_exclusive_group()
    rho_group.add_argument("--rho", default=None, help="scalar or comma-separated")
    rho_group.add_argument(
        "--rho-uniform", nargs=2, type=float, default=None, metavar=("LO", "HI")
    )
    simu.add_argument(
        "--innovation", choices=("normal", "gamma_centered"), default="normal"
    )
    simu.add_argument("--sigma2", type=float, default=1.0)
    simu.add_argument("--seed", type=int, default=None, help="default: PSAR_SEED or 0")
    simu.add_argument("--estimators", default="ml,robust")
    simu.add_argument("--q", type=int, default=None)
    simu.add_argument("--rows", type=int, default=None)
    simu.add_argument("--cols", type=int, default=None)
    simu.add_argument("--records-csv", default=None)
    simu.add_argument("--json", default=None)
    simu.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        WeightsError,
        PanelError,
        EstimationError,
        SpatialFilterError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
