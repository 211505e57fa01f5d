from dataclasses import replace

import numpy as np
import pytest

from survadj.core.adjustment import adjusted_logrank_test, fit_adjusted_hr, pseudo_outcomes
from survadj.core.errors import StratumDegenerate, SurvAdjError, ValidationError
from survadj.core.stratified import (
    fit_gammas,
    fit_stratified_hr,
    stratified_logrank_test,
    stratified_pseudo_outcomes,
    stratified_score,
    stratum_summary,
)
from survadj.core.survival import TrialDataset, cox_score

from ..utils import oracle_pseudo_outcomes, oracle_score, random_trial, symmetric_trial


def _single_stratum(data: TrialDataset) -> TrialDataset:
    return replace(data, stratum=np.zeros(data.n, dtype=np.int64))


def test_requires_stratum_column():
    with pytest.raises(ValidationError):
        fit_stratified_hr(random_trial(40, seed=1))


def test_single_stratum_score_collapses():
    data = random_trial(50, seed=2)
    one = _single_stratum(data)
    for theta in (-0.5, 0.0, 0.4):
        assert stratified_score(one, theta) == cox_score(data, theta)
    np.testing.assert_array_equal(stratified_pseudo_outcomes(one, 0.2).values, pseudo_outcomes(data, 0.2).values)


def test_single_stratum_fit_collapses_on_random_datasets():
    for seed in range(100):
        data = random_trial(40, seed=seed, theta=-0.3)
        one = _single_stratum(data)
        try:
            expected = fit_adjusted_hr(data)
        except SurvAdjError:
            continue
        fit = fit_stratified_hr(one)
        assert fit.method == "StratifiedCovariateAdjusted"
        assert fit.theta_hat == pytest.approx(expected.theta_hat, abs=1e-10)
        assert fit.se == pytest.approx(expected.se, abs=1e-12)


def test_single_stratum_test_collapses():
    data = random_trial(80, seed=3)
    test = stratified_logrank_test(_single_stratum(data))
    expected = adjusted_logrank_test(data)
    assert test.statistic == pytest.approx(expected.statistic, abs=1e-12)
    assert test.sigma2_cl == pytest.approx(expected.sigma2_cl, abs=1e-14)


def test_symmetric_strata_score_zero():
    base = symmetric_trial()
    data = TrialDataset.from_arrays(
        np.concatenate([base.time, base.time + 0.5]),
        np.concatenate([base.event, base.event]),
        np.concatenate([base.arm, base.arm]),
        stratum=[0] * base.n + [1] * base.n,
    )
    assert stratified_score(data, 0.0).value == pytest.approx(0.0, abs=1e-14)


def test_stratified_score_matches_oracle():
    data = TrialDataset.from_arrays(
        [1.0, 2.0, 3.0, 4.0, 1.5, 2.5, 3.5, 4.5],
        [1, 0, 1, 1, 1, 1, 0, 1],
        [1, 0, 1, 0, 0, 1, 1, 0],
        stratum=[0, 0, 0, 0, 1, 1, 1, 1],
    )
    for theta in (-0.7, 0.0, 0.9):
        result = stratified_score(data, theta)
        value, info = oracle_score(data, theta)
        assert result.value == pytest.approx(value, abs=1e-14)
        assert result.neg_derivative == pytest.approx(info, abs=1e-14)
    np.testing.assert_allclose(stratified_pseudo_outcomes(data, 0.3).values, oracle_pseudo_outcomes(data, 0.3))


def test_pseudo_outcome_uses_own_stratum_only():
    lone = TrialDataset.from_arrays(
        [1.0, 2.0, 0.5, 4.0],
        [1, 1, 1, 0],
        [1, 0, 1, 0],
        stratum=[0, 0, 1, 1],
    )
    values = stratified_pseudo_outcomes(lone, 0.0).values
    # stratum 1: treated event at 0.5 with one control at risk (w1 = 1/2), compensator 1/2 * 1/2
    assert values[2] == pytest.approx(0.5 - 0.25)
    np.testing.assert_allclose(values, oracle_pseudo_outcomes(lone, 0.0))


def test_degenerate_stratum_raises():
    data = TrialDataset.from_arrays(
        [1.0, 2.0, 3.0, 4.0, 1.0, 2.0],
        [1, 1, 0, 1, 1, 1],
        [1, 0, 1, 0, 1, 1],
        stratum=[0, 0, 0, 0, 1, 1],
    )
    with pytest.raises(StratumDegenerate) as excinfo:
        fit_stratified_hr(data)
    assert excinfo.value.details["stratum"] == 1


def test_small_strata_are_reported():
    data = random_trial(30, seed=4, n_strata=4)
    fit = fit_stratified_hr(data, [])
    assert fit.method == "StratifiedUnadjusted"
    assert any("only" in message for message in fit.diagnostics)


def test_covariate_constant_within_strata_is_absorbed():
    data = random_trial(120, seed=5, p=1, n_strata=3)
    level = data.stratum.astype(float) * 2.0
    data = data.with_covariates(level, ["level"])
    unadjusted = fit_stratified_hr(data, [])
    fit = fit_stratified_hr(data, ["level"])
    assert fit.coefficients.dropped_directions == 1
    assert fit.theta_hat == pytest.approx(unadjusted.theta_hat, abs=1e-10)


def test_fit_gammas_exposes_pooled_covariance():
    data = random_trial(90, seed=6, n_strata=2)
    coef = fit_gammas(data, stratified_pseudo_outcomes(data, 0.0))
    np.testing.assert_array_equal(coef.gamma1, coef.beta1)
    np.testing.assert_array_equal(coef.gamma0, coef.beta0)
    assert coef.pooled_within_cov.shape == (2, 2)
    assert np.all(np.linalg.eigvalsh(coef.pooled_within_cov) > 0)


def test_stratum_summary():
    data = TrialDataset.from_arrays(
        [1.0, 2.0, 3.0, 4.0, 1.5, 2.5],
        [1, 0, 1, 1, 1, 0],
        [1, 0, 1, 0, 0, 1],
        stratum=[2, 2, 2, 2, 7, 7],
        pi=0.5,
    )
    rows = stratum_summary(data)
    assert [row["stratum"] for row in rows] == [2, 7]
    assert rows[0]["n"] == 4
    assert rows[0]["share"] == pytest.approx(4 / 6)
    assert rows[0]["imbalance"] == pytest.approx(0.0)
    assert rows[1]["n_treated"] == 1
    assert rows[1]["events"] == 1
