"""Panel spatial autoregression with region-specific coefficients.

Estimates the model y_t = W diag(rho) y_t + X_t beta + eps_t on
balanced panels: maximum likelihood via Fisher scoring, a
heteroskedasticity-robust instrumental-variables alternative, a
homogeneity test for the coefficient vector, impact decompositions,
and a Monte Carlo harness.
"""
from .inference import (
    CommonRhoFit,
    HomogeneityTest,
    fit_common_rho,
    homogeneity_test,
    impact_summary,
    spatial_multiplier,
    wald_table,
)
from .io import (
    REPORT_SCHEMA,
    add_response_lag,
    as_payload,
    load_panel,
    load_weights,
    parse_weights_text,
    us_snapshot,
    write_params_csv,
    write_report,
)
from .linalg import (
    SpatialFilterError,
    check_rho,
    filter_log_det,
    spatial_filter,
    spatial_inverse,
    spatial_solve,
)
from .ml import (
    MlFit,
    ScoringConfig,
    beta_covariance,
    beta_given_rho,
    concentrated_loglik,
    fisher_info_rho,
    fit_ml,
    hessian_rho,
    score_rho,
    sigma2_given,
)
from .panel import PanelDataset, PanelError
from .robust import (
    EstimationError,
    InstrumentSet,
    RobustFit,
    UnderIdentifiedError,
    build_instruments,
    fit_robust,
    projection_apply,
    spatial_lag_regressors,
    suggest_power_order,
)
from .simulation import (
    DgpConfig,
    McResult,
    SimulatedPanel,
    child_rng,
    gamma_centered_innovations,
    generate_panel,
    run_monte_carlo,
)
from .weights import WeightsError, WeightsMatrix, grid_weights, row_standardize

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CommonRhoFit",
    "DgpConfig",
    "EstimationError",
    "HomogeneityTest",
    "InstrumentSet",
    "McResult",
    "MlFit",
    "PanelDataset",
    "PanelError",
    "REPORT_SCHEMA",
    "RobustFit",
    "ScoringConfig",
    "SimulatedPanel",
    "SpatialFilterError",
    "UnderIdentifiedError",
    "WeightsError",
    "WeightsMatrix",
    "add_response_lag",
    "as_payload",
    "beta_covariance",
    "beta_given_rho",
    "build_instruments",
    "check_rho",
    "child_rng",
    "concentrated_loglik",
    "filter_log_det",
    "fisher_info_rho",
    "fit_common_rho",
    "fit_ml",
    "fit_robust",
    "gamma_centered_innovations",
    "generate_panel",
    "grid_weights",
    "hessian_rho",
    "homogeneity_test",
    "impact_summary",
    "load_panel",
    "load_weights",
    "row_standardize",
    "run_monte_carlo",
    "score_rho",
    "sigma2_given",
    "spatial_filter",
    "spatial_inverse",
    "spatial_lag_regressors",
    "spatial_multiplier",
    "spatial_solve",
    "suggest_power_order",
    "us_snapshot",
    "wald_table",
    "write_params_csv",
    "write_report",
]
