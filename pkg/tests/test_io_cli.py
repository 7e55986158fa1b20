"""File parsing, dataset assembly, JSON reports and the command line."""
import json

import numpy as np
import pandas as pd
import pytest

from psar import (
    PanelDataset,
    PanelError,
    REPORT_SCHEMA,
    WeightsError,
    add_response_lag,
    as_payload,
    fit_ml,
    load_panel,
    load_weights,
    parse_weights_text,
    us_snapshot,
    write_report,
)
from psar.cli import main
from psar.simulation import DgpConfig, generate_panel

ADJACENCY = """
# chain of four regions
a: b
b: a, c
c: b d
d: c
"""


def test_adjacency_parsing_and_standardization():
    w = parse_weights_text(ADJACENCY)
    assert w.region_ids == ("a", "b", "c", "d")
    expect = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.5, 0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0, 0.5],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    np.testing.assert_array_equal(w.w, expect)


def test_adjacency_rejects_bad_neighbors():
    with pytest.raises(WeightsError, match="itself"):
        parse_weights_text("a: a\nb: a")
    with pytest.raises(WeightsError, match="unknown neighbor"):
        parse_weights_text("a: z\nz2: a")
    with pytest.raises(WeightsError, match="twice"):
        parse_weights_text("a: b\nb: a\na: b")


def test_dense_headerless_gets_generated_ids():
    w = parse_weights_text("0,1,0\n1,0,1\n0,1,0\n")
    assert w.region_ids == ("r0", "r1", "r2")
    np.testing.assert_array_equal(w.w[1], [0.5, 0.0, 0.5])


def test_dense_with_header_row():
    w = parse_weights_text("east,west\n0,2\n2,0\n")
    assert w.region_ids == ("east", "west")
    np.testing.assert_array_equal(w.w, [[0.0, 1.0], [1.0, 0.0]])


def test_dense_with_row_labels_and_corner_cell():
    labeled = "east,west\neast,0,1\nwest,1,0\n"
    cornered = "id,east,west\neast,0,1\nwest,1,0\n"
    for text in (labeled, cornered):
        w = parse_weights_text(text)
        assert w.region_ids == ("east", "west")
        np.testing.assert_array_equal(w.w, [[0.0, 1.0], [1.0, 0.0]])


def test_dense_malformed_inputs():
    with pytest.raises(WeightsError, match="empty"):
        parse_weights_text("   \n# only a comment\n")
    with pytest.raises(WeightsError, match="cells"):
        parse_weights_text("0,1\n1,0,0\n")
    with pytest.raises(WeightsError, match="non-numeric"):
        parse_weights_text("0,1\nx,0\n" .replace("x,0", "0,x"))
    with pytest.raises(WeightsError, match="labeled"):
        parse_weights_text("east,west\nwest,0,1\neast,1,0\n")
    with pytest.raises(WeightsError, match="rows"):
        parse_weights_text("a,b,c\n0,1,0\n1,0,1\n")


def test_load_weights_from_file(tmp_path):
    path = tmp_path / "w.txt"
    path.write_text(ADJACENCY, encoding="utf-8")
    assert load_weights(path).region_ids == ("a", "b", "c", "d")


def panel_frame():
    # two regions, three periods, deliberately shuffled rows
    return pd.DataFrame(
        {
            "region": ["b", "a", "b", "a", "a", "b"],
            "time": [2, 1, 1, 3, 2, 3],
            "y": [25.0, 10.0, 11.0, 30.0, 20.0, 31.0],
            "x1": [2.1, 1.0, 1.1, 3.0, 2.0, 3.1],
        }
    )


def two_region_weights():
    return parse_weights_text("a: b\nb: a")


def test_load_panel_canonicalizes_order():
    data = load_panel(panel_frame(), two_region_weights(), response="y")
    assert data.n == 2 and data.T == 3
    assert data.region_ids == ("a", "b")
    assert data.time_ids == (1, 2, 3)
    np.testing.assert_array_equal(data.y, [10.0, 11.0, 20.0, 25.0, 30.0, 31.0])
    assert data.covariates == ("intercept", "x1")
    np.testing.assert_array_equal(data.x[:, 0], 1.0)
    np.testing.assert_array_equal(data.x[:, 1], [1.0, 1.1, 2.0, 2.1, 3.0, 3.1])


def test_load_panel_numeric_time_ordering():
    frame = panel_frame()
    frame["time"] = frame["time"].map({1: 2, 2: 9, 3: 10})
    data = load_panel(frame, two_region_weights(), response="y", intercept=False)
    assert data.time_ids == (2, 9, 10)


def test_load_panel_without_intercept_and_explicit_covariates():
    data = load_panel(
        panel_frame(), two_region_weights(), response="y", covariates=["x1"],
        intercept=False,
    )
    assert data.covariates == ("x1",)
    assert data.K == 1


def test_load_panel_region_mismatch_messages():
    w3 = parse_weights_text("a: b\nb: a c\nc: b")
    with pytest.raises(PanelError, match="missing from the panel.*'c'"):
        load_panel(panel_frame(), w3, response="y")
    frame = panel_frame()
    frame.loc[frame.region == "b", "region"] = "z"
    with pytest.raises(PanelError, match="not in the weights.*'z'"):
        load_panel(frame, two_region_weights(), response="y")


def test_load_panel_unbalanced_and_duplicates():
    frame = panel_frame().iloc[:-1]
    with pytest.raises(PanelError, match="not balanced.*\\(3, 'b'\\)"):
        load_panel(frame, two_region_weights(), response="y")
    doubled = pd.concat([panel_frame(), panel_frame().iloc[[0]]])
    with pytest.raises(PanelError, match="duplicate"):
        load_panel(doubled, two_region_weights(), response="y")


def test_load_panel_missing_columns():
    with pytest.raises(PanelError, match="no column 'z'"):
        load_panel(panel_frame(), two_region_weights(), response="z")
    with pytest.raises(PanelError, match="no column\\(s\\) \\['w2'\\]"):
        load_panel(panel_frame(), two_region_weights(), response="y", covariates=["w2"])


def test_add_response_lag_shifts_by_one_period():
    data = load_panel(panel_frame(), two_region_weights(), response="y")
    lagged = add_response_lag(data)
    assert lagged.T == 2
    assert lagged.time_ids == (2, 3)
    assert lagged.covariates == ("intercept", "x1", "y_lag")
    np.testing.assert_array_equal(lagged.y, [20.0, 25.0, 30.0, 31.0])
    np.testing.assert_array_equal(lagged.x[:, -1], [10.0, 11.0, 20.0, 25.0])
    with pytest.raises(PanelError, match="already exists"):
        add_response_lag(lagged, name="y_lag")
    single = PanelDataset(y=np.array([1.0, 2.0]), x=np.ones((2, 1)), n=2, T=1,
                          covariates=("intercept",))
    with pytest.raises(PanelError, match="two periods"):
        add_response_lag(single)


def test_report_floats_round_trip_exactly(tmp_path):
    panel = generate_panel(DgpConfig(n=4, T=30, rho_spec=0.3, seed=2, rows=1, cols=4))
    fit = fit_ml(panel.data, panel.weights)
    payload = as_payload(fit, note="check")
    dest = tmp_path / "report.json"
    write_report(payload, dest)
    loaded = json.loads(dest.read_text(encoding="utf-8"))
    assert loaded["schema"] == REPORT_SCHEMA
    assert loaded["kind"] == "ml_fit"
    assert loaded["note"] == "check"
    assert loaded["loglik"] == fit.loglik
    np.testing.assert_array_equal(np.array(loaded["rho_hat"]), fit.rho_hat)
    np.testing.assert_array_equal(np.array(loaded["rho_cov"]), fit.rho_cov)


def test_payload_rejects_unknown_objects():
    with pytest.raises(TypeError, match="serialize"):
        as_payload(object())


def cli_files(tmp_path, n=4, T=40, seed=3):
    panel = generate_panel(DgpConfig(n=n, T=T, rho_spec=0.3, seed=seed, rows=1, cols=n))
    names = list("abcdefghijklmnop")[:n]
    rows = []
    for t in range(T):
        for i, name in enumerate(names):
            rows.append(
                {
                    "region": name,
                    "time": t,
                    "y": panel.data.y[t * n + i],
                    "x1": panel.data.x[t * n + i, 1],
                    "x2": panel.data.x[t * n + i, 2],
                }
            )
    panel_path = tmp_path / "panel.csv"
    pd.DataFrame(rows).to_csv(panel_path, index=False)
    lines = []
    for i, name in enumerate(names):
        nbrs = [names[j] for j in (i - 1, i + 1) if 0 <= j < n]
        lines.append(f"{name}: {', '.join(nbrs)}")
    weights_path = tmp_path / "weights.txt"
    weights_path.write_text("\n".join(lines), encoding="utf-8")
    return str(panel_path), str(weights_path)


def test_cli_fit_ml_writes_report(tmp_path, capsys):
    panel_path, weights_path = cli_files(tmp_path)
    report = tmp_path / "out.json"
    rc = main(
        [
            "fit",
            "--panel", panel_path,
            "--weights", weights_path,
            "--intercept",
            "--json", str(report),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "converged" in out
    assert "beta[intercept]" in out
    loaded = json.loads(report.read_text(encoding="utf-8"))
    assert loaded["kind"] == "ml_fit"
    assert loaded["covariates"] == ["intercept", "x1", "x2"]
    assert len(loaded["covariate_means"]) == 3
    assert len(loaded["covariate_sds"]) == 3


def test_cli_fit_robust_and_params_csv(tmp_path, capsys):
    panel_path, weights_path = cli_files(tmp_path)
    params = tmp_path / "params.csv"
    rc = main(
        [
            "fit",
            "--panel", panel_path,
            "--weights", weights_path,
            "--intercept",
            "--estimator", "robust",
            "--q", "3",
            "--params-csv", str(params),
        ]
    )
    assert rc == 0
    assert "inside [-1, 1]" in capsys.readouterr().out
    table = pd.read_csv(params)
    assert list(table.columns) == ["parameter", "estimate", "std_error", "z_value", "p_value"]
    assert len(table) == 3 + 4


def test_cli_fit_common_with_impacts_and_test(tmp_path, capsys):
    panel_path, weights_path = cli_files(tmp_path)
    rc = main(
        [
            "fit",
            "--panel", panel_path,
            "--weights", weights_path,
            "--intercept",
            "--test-homogeneity",
            "--impacts",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "homogeneity test:" in out
    assert "direct" in out and "indirect" in out


def test_cli_test_subcommand_json_stdout(tmp_path, capsys):
    panel_path, weights_path = cli_files(tmp_path)
    rc = main(
        [
            "test",
            "--panel", panel_path,
            "--weights", weights_path,
            "--intercept",
            "--json", "-",
        ]
    )
    assert rc == 0
    captured = capsys.readouterr()
    # with --json -, stdout must stay machine-readable
    assert "p-value:" in captured.err
    payload = json.loads(captured.out)
    assert payload["kind"] == "homogeneity_test"
    assert 0.0 <= payload["p_value"] <= 1.0


def test_cli_impacts_subcommand(tmp_path, capsys):
    panel_path, weights_path = cli_files(tmp_path)
    rc = main(
        ["impacts", "--panel", panel_path, "--weights", weights_path, "--intercept"]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split() == ["covariate", "direct", "indirect", "total"]


def test_cli_non_convergence_exit_code_still_reports(tmp_path, capsys):
    panel_path, weights_path = cli_files(tmp_path)
    report = tmp_path / "partial.json"
    rc = main(
        [
            "fit",
            "--panel", panel_path,
            "--weights", weights_path,
            "--intercept",
            "--max-iter", "1",
            "--json", str(report),
        ]
    )
    assert rc == 2
    assert "NOT CONVERGED" in capsys.readouterr().out
    assert json.loads(report.read_text(encoding="utf-8"))["converged"] is False


def test_cli_simulate_records_and_seed_env(tmp_path, capsys, monkeypatch):
    records = tmp_path / "records.csv"
    monkeypatch.setenv("PSAR_SEED", "123")
    rc = main(
        [
            "simulate",
            "--n", "4",
            "--t", "20",
            "--reps", "2",
            "--rho", "0.3",
            "--estimators", "ml",
            "--rows", "1",
            "--cols", "4",
            "--records-csv", str(records),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "seed 123" in out
    table = pd.read_csv(records)
    assert list(table.columns) == ["rep", "estimator", "parameter", "truth", "estimate"]
    assert set(table.rep) == {0, 1}


def test_cli_simulate_rho_uniform_and_gamma(capsys):
    rc = main(
        [
            "simulate",
            "--n", "4",
            "--t", "15",
            "--reps", "2",
            "--rho-uniform", "-0.4", "0.4",
            "--innovation", "gamma_centered",
            "--estimators", "ml",
            "--rows", "1",
            "--cols", "4",
            "--seed", "7",
        ]
    )
    assert rc == 0
    assert "seed 7" in capsys.readouterr().out


def test_cli_input_errors_exit_one(tmp_path, capsys):
    panel_path, weights_path = cli_files(tmp_path)
    rc = main(["fit", "--panel", "no-such-file.csv", "--weights", weights_path])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("region,time,y\n", encoding="utf-8")
    rc = main(["fit", "--panel", str(bad), "--weights", weights_path])
    assert rc == 1


def test_cli_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as err:
        main(["fit", "--panel", "p.csv", "--weights", "w.txt", "--estimator", "huber"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 1


def test_us_snapshot_shape_and_weights():
    data, w = us_snapshot()
    assert (data.n, data.T) == (48, 43)
    assert data.covariates == ("intercept", "poverty", "income", "y_lag")
    assert w.n == 48
    assert "DC" not in w.region_ids
    assert data.region_ids == w.region_ids
    # contiguity is symmetric as a graph even after row scaling
    linked = w.w > 0
    assert (linked == linked.T).all()
    assert np.allclose(w.w.sum(axis=1), 1.0)
    # a few well-known border pairs and non-pairs
    ids = {s: k for k, s in enumerate(w.region_ids)}
    assert linked[ids["NV"], ids["CA"]]
    assert linked[ids["ME"], ids["NH"]] and linked[ids["ME"]].sum() == 1
    assert not linked[ids["AZ"], ids["CO"]] and not linked[ids["NM"], ids["UT"]]
    assert data.time_ids == tuple(range(1981, 2024))
    assert data.y.min() > 0.0
