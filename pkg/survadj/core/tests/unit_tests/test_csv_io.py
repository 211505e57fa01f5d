import numpy as np
import pytest

from survadj.core.errors import ParseError, SchemaError, ValidationError
from survadj.tools.csv_io import load_external, load_scores, load_trial, write_scores


def write(tmp_path, text: str, name: str = "trial.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_well_formed_trial(tmp_path):
    path = write(
        tmp_path,
        "time, event, arm, stratum, age\n"
        "1.5, 1, 1, 0, 60\n"
        "2.0, 0, 0, 0, 55.5\n"
        "3.25, 1, 0, 1, 70\n"
        "4, 0, 1, 1, 48\n",
    )
    data = load_trial(path)
    assert data.n == 4
    assert data.feature_names == ("age",)
    np.testing.assert_allclose(data.time, [1.5, 2.0, 3.25, 4.0])
    np.testing.assert_array_equal(data.stratum, [0, 0, 1, 1])
    assert data.tau == 4.0


def test_load_trial_selects_covariates(tmp_path):
    path = write(tmp_path, "time,event,arm,a,b\n1,1,1,0.1,5\n2,1,0,0.2,6\n")
    assert load_trial(path, covariates=["b"]).feature_names == ("b",)
    with pytest.raises(SchemaError):
        load_trial(path, covariates=["c"])


def test_missing_required_column(tmp_path):
    path = write(tmp_path, "time,arm,x\n1,1,0\n2,0,1\n")
    with pytest.raises(SchemaError) as excinfo:
        load_trial(path)
    assert excinfo.value.missing == ["event"]
    assert excinfo.value.exit_code == 2


def test_bad_cells_are_located(tmp_path):
    rows = ["time,event,arm"] + [f"{i + 1},1,{i % 2}" for i in range(6)] + ["7,2,1", "abc,1,0", "-1,0,1"]
    path = write(tmp_path, "\n".join(rows) + "\n")
    with pytest.raises(ParseError) as excinfo:
        load_trial(path)
    located = {(d.row, d.column) for d in excinfo.value.diagnostics}
    assert (7, "event") in located
    assert (8, "time") in located
    assert (9, "time") in located
    assert excinfo.value.details["diagnostics"][0]["row"] == 7


def test_missing_trial_values_are_errors(tmp_path):
    path = write(tmp_path, "time,event,arm,x\n1,1,1,NA\n2,1,0,0.3\n")
    with pytest.raises(ParseError) as excinfo:
        load_trial(path)
    assert excinfo.value.diagnostics[0].reason == "missing value"


def test_unreadable_inputs(tmp_path):
    with pytest.raises(ValidationError):
        load_trial(tmp_path / "absent.csv")
    with pytest.raises(ParseError):
        load_trial(write(tmp_path, "", "empty.csv"))
    with pytest.raises(ValidationError):
        load_trial(write(tmp_path, "time,event,arm\n", "header.csv"))


def test_load_external_imputes_missing_covariates(tmp_path):
    path = write(tmp_path, "time,event,x1,x2\n1,1,1.0,0\n2,0,,1\n3,1,3.0,0\n", "ext.csv")
    ext = load_external(path)
    assert ext.feature_names == ("x1", "x2")
    np.testing.assert_allclose(ext.covariates[:, 0], [1.0, 2.0, 3.0])
    assert ext.diagnostics
    with pytest.raises(SchemaError):
        load_external(write(tmp_path, "time,event\n1,1\n", "bare.csv"))


def test_scores_files(tmp_path):
    path = write_scores(tmp_path / "out" / "scores.csv", np.array([0.1, -0.25, 1 / 3]))
    np.testing.assert_array_equal(load_scores(path, n=3), [0.1, -0.25, 1 / 3])
    with pytest.raises(ValidationError):
        load_scores(path, n=4)
    unnamed = write(tmp_path, "risk\n1\n2\n", "risk.csv")
    np.testing.assert_array_equal(load_scores(unnamed), [1.0, 2.0])
    with pytest.raises(SchemaError):
        load_scores(write(tmp_path, "a,b\n1,2\n", "two.csv"))
