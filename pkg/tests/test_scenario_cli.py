from __future__ import annotations

import json
import warnings

import numpy as np
import pytest
import yaml
from numpy.testing import assert_allclose

from hotspots import cli
from hotspots import scenario as scn
from hotspots.errors import ConfigError, TruncationWarning
from hotspots.expressions import function_of_r, function_of_x

BASE = {
    "name": "tiny",
    "dimension": 2,
    "potential": {"family": "zero"},
    "initial_data": {"type": "function", "expression": "exp(-((x - 1)**2 + y**2))"},
    "evolution": {"t_end": 20, "records": 8, "record_start": 1, "grid_cells": 1024},
    "analysis": {"fit": "bounded", "fit_window_decades": 1.0},
}


def write_config(tmp_path, tree, name="config.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(tree))
    return p


def with_changes(**changes):
    tree = json.loads(json.dumps(BASE))
    for dotted, value in changes.items():
        node = tree
        *path, last = dotted.split("__")
        for k in path:
            node = node[k]
        if value is None:
            node.pop(last)
        else:
            node[last] = value
    return tree


# -- expressions --------------------------------------------------------------------

def test_expression_grammar():
    phi = function_of_x("exp(-r**2) + 0.5*x*y - sqrt(abs(z))", 3)
    x = np.array([[0.3, -0.4, 0.25]])
    expected = np.exp(-(0.09 + 0.16 + 0.0625)) + 0.5 * 0.3 * -0.4 - 0.5
    assert_allclose(phi(x), [expected], rtol=1e-14)
    g = function_of_r("r*exp(-r**2/2)")
    assert_allclose(g(np.array([0.0, 2.0])), [0.0, 2 * np.exp(-2.0)], rtol=1e-14)
    with pytest.raises(ConfigError):
        function_of_x("__import__('os')", 2)
    with pytest.raises(ConfigError):
        function_of_x("q + 1", 2)


# -- config parsing -------------------------------------------------------------------

@pytest.mark.parametrize("changes, key", [
    ({"dimension": None}, "dimension"),
    ({"evolution__t_end": 0.5}, "evolution.t_end"),
    ({"evolution__records": 4}, "evolution.records"),
    ({"outputs": {"formats": ["csv", "png"]}}, "outputs.formats"),
    ({"initial_data__type": "table"}, "initial_data.type"),
    ({"potential": {"family": "hardy"}}, "potential.lambda"),
    ({"evolution__grid_cells": "many"}, "evolution.grid_cells"),
])
def test_malformed_config_names_key(tmp_path, capsys, changes, key):
    p = write_config(tmp_path, with_changes(**changes))
    assert cli.main(["classify", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == cli.EXIT_CONFIG
    assert key in capsys.readouterr().err


def test_unparseable_yaml_is_config_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: [unclosed\n")
    assert cli.main(["classify", "--config", str(p), "--quiet"]) == cli.EXIT_CONFIG


def test_validation_failure_exit_code(tmp_path):
    p = write_config(tmp_path, with_changes(potential={"family": "hardy", "lambda": -0.5}, dimension=3))
    assert cli.main(["classify", "--config", str(p), "--out", str(tmp_path / "o"), "--quiet"]) == cli.EXIT_VALIDATION


def test_bundled_scenarios_parse():
    names = scn.bundled_scenarios()
    assert {"heat_com_N2", "hardy_escape_N3", "well_A_negative", "ambiguous_tail"} <= set(names)
    for name in names:
        sc = scn.load_scenario(name)
        assert sc.name == name and sc.seed == 0


def test_overrides():
    sc = scn.load_scenario("hardy_escape_N3").with_overrides(grid_cells=2048, t_end=50.0, out="x")
    assert sc.evolution["grid_cells"] == 2048 and sc.evolution["t_end"] == 50.0
    assert sc.record_times[-1] == 50.0 and sc.outputs["directory"] == "x"


# -- classify -------------------------------------------------------------------------

def test_classify_zero_potential_is_center_of_mass(tmp_path):
    out = tmp_path / "heat"
    assert cli.main(["classify", "--config", "heat_com_N2", "--out", str(out), "--quiet"]) == 0
    report = json.loads((out / "classification.json").read_text())
    assert report["prediction"]["case_tag"] == "II2c"
    assert_allclose(report["prediction"]["limit_point"], [0.5, 2 / 3], rtol=1e-6)


def test_classify_hardy_is_escape(tmp_path):
    out = tmp_path / "hardy"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        assert cli.main(["classify", "--config", "hardy_radial_N3", "--out", str(out), "--quiet"]) == 0
    pred = json.loads((out / "classification.json").read_text())["prediction"]
    assert pred["case_tag"] == "II1"
    assert "sqrt(2 A t), A = 1" in pred["radius_law"]["descriptor"]


def test_ambiguous_classification_writes_report(tmp_path, capsys):
    out = tmp_path / "amb"
    assert cli.main(["classify", "--config", "ambiguous_tail", "--out", str(out)]) == cli.EXIT_AMBIGUOUS
    report = json.loads((out / "classification.json").read_text())
    assert report["classification"]["ambiguous"]
    assert "prediction" not in report
    assert "ambiguous" in capsys.readouterr().err


def test_profile_command(tmp_path):
    out = tmp_path / "prof"
    assert cli.main(["profile", "--config", "two_mode_N2", "--out", str(out), "--quiet"]) == 0
    assert (out / "profile_k0.csv").is_file() and (out / "profile_k1.csv").is_file()


def test_list_command(capsys):
    assert cli.main(["list"]) == 0
    assert "heat_com_N2" in capsys.readouterr().out.split()


# -- run --------------------------------------------------------------------------------

def test_run_writes_outputs_and_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", "heat_com_N2", "--out", str(a), "--seed", "0"]) == 0
    summary = capsys.readouterr().out
    assert "overall: PASS" in summary and "case II2c" in summary
    assert cli.main(["run", "--config", "heat_com_N2", "--out", str(b), "--quiet"]) == 0
    names = {"trajectory.csv", "conservation.csv", "profile_k0.csv", "summary_checks.csv",
             "classification.json", "comparison.json", "summary.txt"}
    assert names <= {p.name for p in a.iterdir()}
    for p in a.glob("*.csv"):
        assert p.read_bytes() == (b / p.name).read_bytes()
    comparison = json.loads((a / "comparison.json").read_text())
    assert comparison["seed"] == 0 and comparison["scenario"] == "heat_com_N2"
    # every check in the summary traces to a CSV row
    rows = (a / "summary_checks.csv").read_text().splitlines()
    assert len(rows) - 1 == sum(line.startswith("[") for line in summary.splitlines())


def test_run_short_span_is_analysis_error(tmp_path, capsys):
    code = cli.main(["run", "--config", "heat_com_N2", "--out", str(tmp_path), "--t-end", "5", "--quiet"])
    assert code == cli.EXIT_ANALYSIS
    assert "need >= 8 records" in capsys.readouterr().err


def test_run_ambiguous_exit_code(tmp_path):
    assert cli.main(["run", "--config", "ambiguous_tail", "--out", str(tmp_path), "--quiet"]) == cli.EXIT_AMBIGUOUS
    assert (tmp_path / "classification.json").is_file()


@pytest.mark.parametrize("name", ["heat_com_N2", "two_mode_N2", "decaying_rate_N4"])
def test_halved_grid_keeps_conservation(name):
    sc = scn.load_scenario(name)
    sc = sc.with_overrides(grid_cells=sc.evolution["grid_cells"] // 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        prep = scn.prepare(sc)
        run = scn.evolve(prep)
    led = np.array([p for _, p in run.state.ledger])
    assert np.max(np.abs(led / led[0] - 1)) < 1e-3


# -- verify -----------------------------------------------------------------------------

@pytest.mark.slow
def test_verify_with_short_t_end_fails(capfd):
    assert cli.main(["verify", "--t-end", "5", "--quiet"]) == cli.EXIT_CHECKS
    out = capfd.readouterr().out
    assert "InsufficientSpan" in out


def test_verify_missing_suite(tmp_path):
    assert cli.main(["verify", "--tests", str(tmp_path / "none.py")]) == cli.EXIT_CONFIG
