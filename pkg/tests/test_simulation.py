"""Synthetic panel generator and the Monte Carlo driver."""
import numpy as np
import pytest

from psar import (
    DgpConfig,
    McResult,
    child_rng,
    gamma_centered_innovations,
    generate_panel,
    grid_weights,
    run_monte_carlo,
    spatial_filter,
)


def test_panel_satisfies_model_identity():
    cfg = DgpConfig(n=12, T=7, rho_spec=("uniform", -0.8, 0.8), seed=1)
    sim = generate_panel(cfg, rep=3)
    lhs = spatial_filter(sim.rho, sim.weights, sim.data.y)
    rhs = sim.data.x @ np.array(cfg.beta) + sim.innovations
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_covariate_moments():
    cfg = DgpConfig(n=49, T=200, seed=2)
    sim = generate_panel(cfg)
    x = sim.data.x
    np.testing.assert_array_equal(x[:, 0], 1.0)
    assert abs(x[:, 1].mean()) < 0.05
    assert abs(x[:, 2].mean() - 2.0) < 0.05
    assert abs(x[:, 1].std() - 1.0) < 0.05
    assert abs(x[:, 2].std() - 1.0) < 0.05


def test_normal_innovations_scale_with_sigma2():
    cfg = DgpConfig(n=50, T=400, sigma2=4.0, seed=3)
    sim = generate_panel(cfg)
    assert abs(sim.innovations.var() - 4.0) < 0.12


def test_gamma_innovations_centered_with_stated_variance():
    rng = np.random.default_rng(4)
    draws = gamma_centered_innovations(rng, 1_000_000)
    assert abs(draws.mean()) < 0.002
    # variance of the uniform-v mixture is log(3)/4
    assert abs(draws.var() - np.log(3.0) / 4.0) < 0.01
    fixed = gamma_centered_innovations(rng, 1_000_000, v=1.0)
    assert abs(fixed.var() - 0.25) < 0.01
    halfed = gamma_centered_innovations(rng, 1_000_000, v=0.5)
    assert abs(halfed.var() - 0.5) < 0.01
    assert draws.min() >= -0.5  # gamma support shifted down by the mean


def test_generation_is_bitwise_reproducible():
    cfg = DgpConfig(n=9, T=11, rho_spec=("uniform", -0.5, 0.5),
                    innovation="gamma_centered", seed=5)
    a = generate_panel(cfg, rep=2)
    b = generate_panel(cfg, rep=2)
    np.testing.assert_array_equal(a.data.y, b.data.y)
    np.testing.assert_array_equal(a.data.x, b.data.x)
    np.testing.assert_array_equal(a.rho, b.rho)
    np.testing.assert_array_equal(a.innovations, b.innovations)


def test_replicates_differ_and_redraw_rho():
    cfg = DgpConfig(n=9, T=5, rho_spec=("uniform", -0.5, 0.5), seed=6)
    a, b = generate_panel(cfg, rep=0), generate_panel(cfg, rep=1)
    assert not np.array_equal(a.rho, b.rho)
    assert not np.array_equal(a.data.y, b.data.y)
    assert np.abs(a.rho).max() <= 0.5
    # fixed specs are shared across replicates
    fixed = DgpConfig(n=9, T=5, rho_spec=0.4, seed=6)
    np.testing.assert_array_equal(generate_panel(fixed, 0).rho, np.full(9, 0.4))
    np.testing.assert_array_equal(generate_panel(fixed, 1).rho, np.full(9, 0.4))


def test_child_streams_are_distinct():
    assert child_rng(7, 0).random() != child_rng(7, 1).random()
    assert child_rng(7, 0).random() == child_rng(7, 0).random()


def test_default_grid_shape_prefers_square():
    sim = generate_panel(DgpConfig(n=25, T=1, seed=8))
    np.testing.assert_array_equal(sim.weights.w, grid_weights(5, 5).w)
    sim = generate_panel(DgpConfig(n=6, T=1, seed=8))
    np.testing.assert_array_equal(sim.weights.w, grid_weights(2, 3).w)
    path = generate_panel(DgpConfig(n=6, T=1, seed=8, rows=1, cols=6))
    np.testing.assert_array_equal(path.weights.w, grid_weights(1, 6).w)


def test_config_validation():
    with pytest.raises(ValueError, match="beta"):
        DgpConfig(n=4, T=2, beta=(1.0, 2.0))
    with pytest.raises(ValueError, match="innovation"):
        DgpConfig(n=4, T=2, innovation="cauchy")
    with pytest.raises(ValueError, match="grid"):
        DgpConfig(n=7, T=2, rows=2, cols=3)
    with pytest.raises(ValueError, match="sigma2"):
        DgpConfig(n=4, T=2, sigma2=0.0)
    with pytest.raises(ValueError, match="uniform range"):
        generate_panel(DgpConfig(n=4, T=2, rho_spec=("uniform", -2.0, 0.5)))


def test_monte_carlo_records_and_summary():
    cfg = DgpConfig(n=4, T=60, rho_spec=0.3, seed=9, rows=1, cols=4)
    res = run_monte_carlo(cfg, reps=4, estimators=("ml", "robust"), robust_q=3)
    assert isinstance(res, McResult)
    assert res.reps == 4
    assert len(res.failures) == 0
    # 4 reps x 2 estimators x (3 betas + 4 rhos)
    assert len(res.records) == 4 * 2 * 7
    assert set(res.records.estimator) == {"ml", "robust"}
    ml_rows = res.summary[res.summary.estimator == "ml"]
    assert (ml_rows.n_ok == 4).all()
    assert (res.summary.mse >= 0).all()
    assert (res.summary.abs_err_q25 <= res.summary.abs_err_median).all()
    assert (res.summary.abs_err_median <= res.summary.abs_err_q75).all()


def test_monte_carlo_prefix_is_stable_when_reps_grow():
    cfg = DgpConfig(n=4, T=30, rho_spec=("uniform", -0.4, 0.4), seed=10, rows=1, cols=4)
    short = run_monte_carlo(cfg, reps=2, estimators=("ml",))
    long = run_monte_carlo(cfg, reps=5, estimators=("ml",))
    prefix = long.records[long.records.rep < 2].reset_index(drop=True)
    np.testing.assert_array_equal(prefix.estimate.values, short.records.estimate.values)


def test_single_rep_quantiles_collapse():
    cfg = DgpConfig(n=4, T=40, rho_spec=0.2, seed=11, rows=2, cols=2)
    res = run_monte_carlo(cfg, reps=1, estimators=("ml",))
    assert (res.summary.abs_err_q25 == res.summary.abs_err_median).all()
    assert (res.summary.abs_err_median == res.summary.abs_err_q75).all()


def test_estimator_failures_are_recorded_not_raised():
    cfg = DgpConfig(n=6, T=8, rho_spec=0.2, seed=12, rows=1, cols=6)
    res = run_monte_carlo(cfg, reps=2, estimators=("robust",), robust_q=1)
    assert len(res.records) == 0
    assert len(res.failures) == 2
    assert res.failures.error.str.contains("UnderIdentified").all()


def test_monte_carlo_argument_validation():
    cfg = DgpConfig(n=4, T=5, seed=13, rows=2, cols=2)
    with pytest.raises(ValueError, match="reps"):
        run_monte_carlo(cfg, reps=0)
    with pytest.raises(ValueError, match="unknown estimators"):
        run_monte_carlo(cfg, reps=1, estimators=("ml", "gmm"))
