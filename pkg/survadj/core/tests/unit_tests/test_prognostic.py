import joblib
import numpy as np
import pytest

from survadj.core.errors import FeatureMismatch, InvalidTime, ModelFormatError, NoEvents, ValidationError
from survadj.core.prognostic import (
    ExternalControls,
    ForestParams,
    estimate_rho,
    external_martingale_target,
    external_survival_target,
    load_model,
    save_model,
    score,
    train,
)
from survadj.core.survival import TrialDataset, martingale_residuals, nelson_aalen

from ..utils import random_trial

SMALL_FOREST = ForestParams(n_estimators=30)


def three_subject_controls() -> ExternalControls:
    return ExternalControls.from_arrays([1.0, 2.0, 3.0], [1, 0, 1], [[0.1], [0.2], [0.3]], ["x1"], tau=3.0)


def simulated_controls(n: int = 300, seed: int = 0) -> ExternalControls:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    event_time = rng.exponential(1.0, n) / np.exp(1.2 * x[:, 0])
    censor = rng.exponential(3.0, n)
    return ExternalControls.from_arrays(np.minimum(event_time, censor), event_time <= censor, x, ["x1", "x2"])


def test_external_controls_impute_and_warn():
    ext = ExternalControls.from_arrays([1.0, 2.0, 3.0], [1, 0, 1], [[1.0], [np.nan], [3.0]], ["x1"])
    np.testing.assert_allclose(ext.covariates[:, 0], [1.0, 2.0, 3.0])
    assert any("mean-imputed 1" in message for message in ext.diagnostics)
    assert any("only 3 rows" in message for message in ext.diagnostics)
    with pytest.raises(ValidationError):
        ExternalControls.from_arrays([1.0, 2.0], [1, 0], [[np.nan], [np.nan]], ["x1"])


def test_external_controls_select():
    ext = simulated_controls(30)
    assert ext.select(["x2"]).feature_names == ("x2",)
    with pytest.raises(FeatureMismatch):
        ext.select(["x9"])


def test_martingale_target_hand_values():
    np.testing.assert_allclose(external_martingale_target(three_subject_controls()), [2 / 3, -1 / 3, -1 / 3])


def test_martingale_target_needs_events():
    ext = ExternalControls.from_arrays([1.0, 2.0], [0, 0], [[0.0], [1.0]], ["x1"])
    with pytest.raises(NoEvents):
        external_martingale_target(ext)


def test_survival_target_hand_values():
    target = external_survival_target(three_subject_controls(), at_time=3.0)
    np.testing.assert_allclose(target, np.exp(-np.array([1 / 3, 1 / 3, 4 / 3])))
    with pytest.raises(InvalidTime):
        external_survival_target(three_subject_controls(), at_time=4.0)


def test_forest_fits_step_function_out_of_bag():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.0, 1.0, (400, 1))
    forest = ForestParams(n_estimators=100).build(n_features=1, seed=0)
    forest.fit(x, np.sign(x[:, 0]))
    assert forest.oob_score_ > 0.8
    assert forest.max_features == 1


def test_degenerate_target_gives_constant_model():
    model = train(three_subject_controls(), "survival", SMALL_FOREST, at_time=0.5)
    assert model.training_summary["constant"]
    data = TrialDataset.from_arrays([1.0, 2.0, 3.0], [1, 1, 0], [1, 0, 1], [[5.0], [6.0], [7.0]])
    np.testing.assert_allclose(score(model, data), 1.0)


def test_trained_score_tracks_prognosis():
    ext = simulated_controls()
    model = train(ext, hyperparams=SMALL_FOREST, seed=1)
    assert model.target_kind == "martingale"
    assert model.feature_names == ("x1", "x2")
    assert "oob_r2" in model.training_summary
    data = random_trial(300, seed=2)
    estimate = estimate_rho(data, score(model, data))
    assert estimate.rho > 0.1
    assert estimate.variance_ratio == pytest.approx(1 - estimate.rho**2)

    survival_model = train(ext, "survival", SMALL_FOREST, seed=1)
    assert survival_model.at_time == pytest.approx(np.median(ext.time))
    assert estimate_rho(data, score(survival_model, data)).rho < 0.0


def test_scores_and_rho_do_not_depend_on_subject_order():
    model = train(simulated_controls(150), hyperparams=SMALL_FOREST, seed=6)
    data = random_trial(200, seed=12, n_strata=3)
    order = np.random.default_rng(13).permutation(data.n)
    shuffled = TrialDataset.from_arrays(
        data.time[order],
        data.event[order],
        data.arm[order],
        data.covariates[order],
        feature_names=data.feature_names,
        stratum=data.stratum[order],
        tau=data.tau,
    )
    scores = score(model, data)
    shuffled_scores = score(model, shuffled)
    np.testing.assert_array_equal(shuffled_scores, scores[order])

    estimate = estimate_rho(data, scores)
    shuffled_estimate = estimate_rho(shuffled, shuffled_scores)
    assert shuffled_estimate.rho == pytest.approx(estimate.rho, abs=1e-12)
    assert shuffled_estimate.rho_strat == pytest.approx(estimate.rho_strat, abs=1e-12)


def test_model_id_is_deterministic():
    ext = simulated_controls(120)
    first = train(ext, hyperparams=SMALL_FOREST, seed=3)
    second = train(ext, hyperparams=SMALL_FOREST, seed=3)
    other = train(ext, hyperparams=SMALL_FOREST, seed=4)
    assert first.model_id == second.model_id
    assert first.model_id != other.model_id


def test_score_requires_model_features():
    model = train(simulated_controls(60), hyperparams=SMALL_FOREST)
    data = TrialDataset.from_arrays([1.0, 2.0], [1, 1], [1, 0], [[0.0], [1.0]])
    with pytest.raises(FeatureMismatch) as excinfo:
        score(model, data)
    assert excinfo.value.missing == ["x2"]

    with pytest.raises(FeatureMismatch) as excinfo:
        model.predict(np.zeros((4, 3)))
    assert excinfo.value.details["expected"] == 2
    assert excinfo.value.details["actual"] == 3
    assert "expects 2 feature columns, got 3" in excinfo.value.message


def test_save_and_load_model(tmp_path):
    model = train(simulated_controls(80), hyperparams=SMALL_FOREST, seed=5)
    path = save_model(model, tmp_path / "models" / "model.joblib")
    loaded = load_model(path)
    assert loaded.model_id == model.model_id
    x = np.random.default_rng(1).standard_normal((10, 2))
    np.testing.assert_array_equal(loaded.predict(x), model.predict(x))


def test_load_model_rejects_bad_files(tmp_path):
    with pytest.raises(ValidationError):
        load_model(tmp_path / "missing.joblib")

    garbage = tmp_path / "garbage.joblib"
    garbage.write_text("not a model")
    with pytest.raises(ModelFormatError):
        load_model(garbage)

    foreign = tmp_path / "foreign.joblib"
    joblib.dump({"weights": [1, 2, 3]}, foreign)
    with pytest.raises(ModelFormatError):
        load_model(foreign)

    path = save_model(train(simulated_controls(60), hyperparams=SMALL_FOREST), tmp_path / "model.joblib")
    container = joblib.load(path)
    container["hyperparams"]["seed"] = 999
    joblib.dump(container, path)
    with pytest.raises(ModelFormatError):
        load_model(path)

    container["format_version"] = "99"
    joblib.dump(container, path)
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_estimate_rho_properties():
    data = random_trial(150, seed=7)
    residuals = martingale_residuals(data, nelson_aalen(data))
    assert estimate_rho(data, residuals).rho == pytest.approx(1.0)

    scores = np.random.default_rng(8).standard_normal(data.n) + residuals
    base = estimate_rho(data, scores).rho
    assert estimate_rho(data, 3.0 * scores - 2.0).rho == pytest.approx(base, abs=1e-12)
    assert estimate_rho(data, -scores).rho == pytest.approx(-base, abs=1e-12)

    flat = estimate_rho(data, np.ones(data.n))
    assert flat.rho == 0.0
    assert flat.zero_variance
    assert flat.rho_strat is None

    with pytest.raises(ValidationError):
        estimate_rho(data, scores[:-1])


def test_estimate_rho_reports_within_stratum_correlation():
    data = random_trial(200, seed=9, n_strata=3)
    estimate = estimate_rho(data, data.covariates[:, 0])
    assert estimate.rho_strat is not None
    assert -1.0 <= estimate.rho_strat <= 1.0
    assert estimate.n_used == data.n
