import json

import numpy as np
import pandas as pd
import pytest
import yaml

from copulaprobit import cli
from copulaprobit.config import ConfigError, RunConfig, load_config, parse_terms
from copulaprobit.panel import CsvFormatError, NonNumericColumnError, difference_within_group, load_csv, peace_years


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ----------------------------------------------------------------------
# CSV ingestion


def test_load_three_row_file_exact_values(tmp_path):
    p = _write(tmp_path / "a.csv", "y,t,x\n1,0,0.5\n0,1,-1.25\n1,1,3\n")
    table = load_csv(p)
    assert table.n_rows == 3
    assert table.columns == ["y", "t", "x"]
    np.testing.assert_array_equal(table.column("x"), [0.5, -1.25, 3.0])
    np.testing.assert_array_equal(table.column("y"), [1.0, 0.0, 1.0])


def test_na_in_modeling_column_drops_one_row(tmp_path):
    p = _write(tmp_path / "a.csv", "y,t,x,label\n1,0,0.5,a\n0,NA,-1.25,b\n1,1,,c\n0,1,2,NA\n")
    table = load_csv(p)
    kept = table.listwise(["y", "t"])
    assert kept.dropped == 1
    assert kept.n_rows + kept.dropped == table.n_rows
    assert list(kept.column("label")) == ["a", "c", None]


def test_listwise_counts_accumulate(tmp_path):
    p = _write(tmp_path / "a.csv", "y,t,x\n1,0,0.5\n0,NA,-1.25\n1,1,\n")
    table = load_csv(p)
    kept = table.listwise(["y", "t", "x"])
    assert (kept.n_rows, kept.dropped) == (1, 2)


def test_field_count_mismatch_names_line(tmp_path):
    p = _write(tmp_path / "a.csv", "y,t,x\n1,0,0.5\n0,1\n")
    with pytest.raises(CsvFormatError, match="line 3") as err:
        load_csv(p)
    assert err.value.line == 3


@pytest.mark.parametrize("text", ["", "y,,x\n1,2,3\n", "y,y\n1,2\n"])
def test_bad_header_rejected(tmp_path, text):
    with pytest.raises(CsvFormatError):
        load_csv(_write(tmp_path / "a.csv", text))


def test_non_numeric_modeling_column_rejected(tmp_path):
    table = load_csv(_write(tmp_path / "a.csv", "y,t\n1,yes\n0,no\n"))
    assert not table.is_numeric("t")
    with pytest.raises(NonNumericColumnError, match="'t'"):
        table.listwise(["y", "t"])


# ----------------------------------------------------------------------
# pre-processing transforms


def test_difference_within_group_handles_first_year_and_gaps():
    frame = pd.DataFrame({"g": ["a", "a", "a", "b", "b", "a"],
                          "year": [2000, 2001, 2003, 2000, 2001, 2004],
                          "x": [1.0, 4.0, 5.0, 10.0, 7.0, 8.0]})
    out = difference_within_group(frame, "x", "g", "year")
    np.testing.assert_array_equal(out["d_x"].to_numpy(), [np.nan, 3.0, np.nan, np.nan, -3.0, 3.0])


def test_peace_years_counts_and_resets():
    frame = pd.DataFrame({"g": [1, 1, 1, 1, 2, 2], "year": [1, 2, 3, 4, 1, 2],
                          "ev": [0.0, 1.0, 0.0, 0.0, 1.0, 0.0]})
    out = peace_years(frame, "ev", "g", "year")
    np.testing.assert_array_equal(out["peace_years"].to_numpy(), [0, 1, 0, 1, 0, 0])


def test_diff_subcommand_writes_csv_and_manifest(tmp_path):
    src = _write(tmp_path / "in.csv", "g,year,x\na,1,1\na,2,3\nb,1,5\n")
    dst = tmp_path / "o" / "out.csv"
    code = cli.main(["diff", "--input", str(src), "--output", str(dst), "--column", "x",
                     "--group", "g", "--time", "year"])
    assert code == 0
    assert dst.read_text() == "g,year,x,d_x\na,1,1,NA\na,2,3,2\nb,1,5,NA\n"
    man = json.loads((tmp_path / "o" / "out.csv.manifest.json").read_text())
    assert man["command"] == "diff" and man["outputs"][0]["sha256"]


# ----------------------------------------------------------------------
# configuration


def test_parse_terms_splits_smooths():
    cols, smooths = parse_terms(["a", "spline(b, 6)", "spline(c)"])
    assert cols == ["a"]
    assert [(s.column, s.basis_dim) for s in smooths] == [("b", 6), ("c", 10)]
    with pytest.raises(ConfigError):
        parse_terms(["log(a)"])


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"data": "x.csv", "sedd": 1})
    with pytest.raises(ConfigError, match="split"):
        RunConfig.from_dict({"split": {"fractoin": 0.5}})


def test_instrument_in_outcome_equation_is_user_error(tmp_path):
    cfg = RunConfig.from_dict({"treatment": "t", "outcome": "y", "eq1": ["z"], "eq2": ["z"], "instruments": ["z"]})
    with pytest.raises(Exception) as err:
        cfg.model_spec()
    assert isinstance(err.value, (ConfigError, ValueError))


# ----------------------------------------------------------------------
# command pipeline


CONFIG = {
    "data": "data/panel.csv",
    "treatment": "alliance",
    "outcome": "dispute",
    "eq1": ["c1", "c2", "z1", "z2"],
    "eq2": ["c1", "c2"],
    "instruments": ["z1", "z2"],
    "copula": "selected",
    "copulas": ["N", "C180", "F"],
    "split": {"seed": 3, "fraction": 0.7},
    "n_sims": 60,
    "seed": 5,
    "output": "out",
    "simulate": {"n_rows": 1500, "gamma_true": -0.3, "copula": "N", "theta": 0.4, "seed": 11,
                 "beta2_true": [-1.0, 0.5, 0.5]},
}


@pytest.fixture()
def project(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump(CONFIG))
    return tmp_path, cfg


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _results(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if not p.name.endswith(".manifest.json")}


def test_pipeline_is_deterministic_and_manifests_rerun(project, capsys):
    root, cfg = project
    steps = ["simulate", "select-copula", "fit", "ate", "sensitivity", "baseline", "compare", "iv-test"]
    for step in steps:
        assert _run(step, "--config", cfg) == 0, capsys.readouterr().err
    first = _results(root / "out")
    assert {"selection.csv", "selection.svg", "fit.json", "ate.json", "sensitivity.csv", "sensitivity_z.svg",
            "pr_curves.csv", "compare.json", "iv_test.json", "baseline.json", "truth.json"} <= set(first)
    for step in steps:
        assert _run(step, "--config", cfg) == 0
    assert _results(root / "out") == first

    selection = json.loads(first["selection.json"])
    fit_json = json.loads(first["fit.json"])
    assert fit_json["copula"] == selection["winner"]
    man = json.loads((root / "out" / "fit.manifest.json").read_text())
    assert man["resolved_copula"] == selection["winner"]
    assert man["rows"] == {"input": 1500, "dropped": 0, "retained": 1500}
    assert set(man["versions"]) >= {"python", "numpy", "scipy", "pandas", "copulaprobit"}
    assert man["seeds"]["seed"] == 5

    # the manifest is itself a valid config
    other = root / "elsewhere"
    assert _run("ate", "--config", root / "out" / "ate.manifest.json", "--output", other) == 0
    assert (other / "ate.json").read_bytes() == first["ate.json"]


def test_simulate_then_fit_recovers_gamma(project):
    root, cfg = project
    raw = dict(CONFIG, copula="N", simulate=dict(CONFIG["simulate"], n_rows=5000))
    cfg.write_text(yaml.safe_dump(raw))
    assert _run("simulate", "--config", cfg) == 0
    assert _run("fit", "--config", cfg) == 0
    body = json.loads((root / "out" / "fit.json").read_text())
    coef = {c["name"]: c for c in body["coefficients"]}
    g = coef["eq2:alliance"]
    assert abs(g["estimate"] - (-0.3)) < 3 * g["std_error"]


def test_single_copula_selection_is_rank_one(project):
    root, cfg = project
    cfg.write_text(yaml.safe_dump(dict(CONFIG, copulas=["F"])))
    assert _run("simulate", "--config", cfg) == 0
    assert _run("select-copula", "--config", cfg) == 0
    sel = json.loads((root / "out" / "selection.json").read_text())
    assert sel["winner"] == "F" and sel["records"][0]["rank"] == 1


def test_listwise_deletion_reported(project):
    root, cfg = project
    assert _run("simulate", "--config", cfg) == 0
    data = root / "data" / "panel.csv"
    lines = data.read_text().splitlines()
    cols = lines[1].split(",")
    cols[2] = "NA"
    lines[1] = ",".join(cols)
    data.write_text("\n".join(lines) + "\n")
    assert _run("iv-test", "--config", cfg) == 0
    man = json.loads((root / "out" / "iv-test.manifest.json").read_text())
    assert man["rows"] == {"input": 1500, "dropped": 1, "retained": 1499}


def test_user_errors_exit_1_with_json(project, capsys):
    root, cfg = project
    assert _run("fit", "--config", root / "missing.yaml") == 1
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 1 and err["error"] == "ConfigError"

    assert _run("fit", "--config", cfg) == 1  # data file not simulated yet
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"

    assert _run("simulate", "--config", cfg) == 0
    bad = root / "bad.yaml"
    bad.write_text(yaml.safe_dump(dict(CONFIG, eq2=["c1", "nope"])))
    assert _run("baseline", "--config", bad) == 1
    assert "nope" in json.loads(capsys.readouterr().err)["message"]


def test_numerical_failure_exits_2(project, capsys):
    root, cfg = project
    assert _run("simulate", "--config", cfg) == 0
    # outcome perfectly predicted by a column: the fit cannot converge
    data = root / "data" / "panel.csv"
    frame = pd.read_csv(data)
    frame["leak"] = frame["dispute"]
    frame.to_csv(data, index=False)
    bad = root / "sep.yaml"
    bad.write_text(yaml.safe_dump(dict(CONFIG, copula="N", eq2=["c1", "c2", "leak"])))
    assert _run("fit", "--config", bad) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2


def test_load_config_json_and_yaml_agree(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps(CONFIG))
    (tmp_path / "a.yaml").write_text(yaml.safe_dump(CONFIG))
    assert load_config(tmp_path / "a.json").to_dict() == load_config(tmp_path / "a.yaml").to_dict()
