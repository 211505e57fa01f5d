import numpy as np
import pytest

from survadj.core.adjustment import (
    VARIANCE_FLOOR,
    _floor_variance,
    adjusted_logrank_test,
    fit_adjusted_hr,
    fit_betas,
    fit_unadjusted_hr,
    logrank_test,
    p_value,
    pseudo_outcomes,
)
from survadj.core.errors import NonpositiveVariance, SingularDesign, SurvAdjError
from survadj.core.protocol import Diagnostics
from survadj.core.survival import TrialDataset, cox_mple, cox_score

from ..utils import (
    four_subject_trial,
    grid_root,
    oracle_pseudo_outcomes,
    random_trial,
    symmetric_trial,
    tiny_random_trial,
)


def test_pseudo_outcomes_hand_values():
    po = pseudo_outcomes(four_subject_trial(), 0.0)
    np.testing.assert_allclose(po.values, [27 / 72, -25 / 72, 7 / 72, -17 / 72], atol=1e-14)
    assert po.arm_means == pytest.approx((-5 / 72, 1 / 72))


def test_pseudo_outcomes_match_oracle_and_score_identity():
    data = random_trial(25, seed=5)
    for theta in (-1.0, 0.0, 1.0):
        po = pseudo_outcomes(data, theta)
        np.testing.assert_allclose(po.values, oracle_pseudo_outcomes(data, theta), atol=1e-12)
        signed = np.where(data.arm == 1, po.values, -po.values).sum() / data.n
        assert signed == pytest.approx(cox_score(data, theta).value, abs=1e-10)


def test_pseudo_outcome_zero_before_first_event():
    data = TrialDataset.from_arrays([0.5, 1.0, 2.0, 3.0], [0, 1, 1, 0], [1, 1, 0, 0])
    assert pseudo_outcomes(data, 0.3).values[0] == 0.0


def test_fit_betas_univariate_matches_closed_form():
    data = random_trial(40, seed=8, p=1)
    po = pseudo_outcomes(data, 0.0)
    coef = fit_betas(data, po)
    for arm, beta in ((1, coef.beta1), (0, coef.beta0)):
        x = data.covariates[data.arm == arm, 0]
        y = po.values[data.arm == arm]
        slope = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
        assert beta[0] == pytest.approx(slope, rel=1e-10)


def test_fit_betas_drops_constant_column():
    data = random_trial(30, seed=2, p=1)
    data = data.with_covariates(np.ones(data.n), ["const"])
    coef = fit_betas(data, pseudo_outcomes(data, 0.0))
    assert coef.dropped_directions == 1
    assert coef.beta1[1] == pytest.approx(0.0, abs=1e-12)
    assert coef.beta0[1] == pytest.approx(0.0, abs=1e-12)


def test_fit_betas_zero_pseudo_outcomes():
    data = random_trial(20, seed=4)
    po = pseudo_outcomes(data, 0.0)
    zeros = type(po)(theta=0.0, values=np.zeros(data.n), arm_means=(0.0, 0.0))
    coef = fit_betas(data, zeros)
    np.testing.assert_array_equal(coef.beta1, 0.0)
    np.testing.assert_array_equal(coef.beta0, 0.0)


def test_fit_betas_needs_enough_subjects_per_arm():
    data = TrialDataset.from_arrays(
        [1.0, 2.0, 3.0, 4.0, 5.0], [1, 1, 1, 1, 0], [1, 1, 0, 0, 0], np.arange(10.0).reshape(5, 2)
    )
    with pytest.raises(SingularDesign):
        fit_betas(data, pseudo_outcomes(data, 0.0))


def test_logrank_test_without_covariates():
    data = random_trial(60, seed=9)
    test = logrank_test(data)
    assert test.method == "Unadjusted"
    assert test.u_cl == test.u_l
    assert test.statistic == pytest.approx(test.statistic_unadjusted)
    assert test.coefficients is None


def textbook_logrank_z(data: TrialDataset) -> float:
    """(O - E) / sqrt(V) for the treated arm with the hypergeometric variance."""
    observed = expected = variance = 0.0
    counted = data.event & (data.time <= data.tau)
    for t in np.unique(data.time[counted]):
        at_risk = data.time >= t
        y = at_risk.sum()
        y1 = (at_risk & (data.arm == 1)).sum()
        dying = counted & (data.time == t)
        d = dying.sum()
        observed += (dying & (data.arm == 1)).sum()
        expected += d * y1 / y
        if y > 1:
            variance += d * (y1 / y) * (1 - y1 / y) * (y - d) / (y - 1)
    return (observed - expected) / np.sqrt(variance)


@pytest.mark.parametrize("seed", range(20))
def test_logrank_statistic_matches_textbook_formula(seed):
    data = random_trial(120, seed=seed, theta=-0.3)
    assert np.unique(data.time).size == data.n
    assert logrank_test(data).statistic == pytest.approx(textbook_logrank_z(data), abs=1e-8)


def test_symmetric_null_test_has_p_value_one():
    data = symmetric_trial()
    test = adjusted_logrank_test(data)
    assert test.u_cl == pytest.approx(0.0, abs=1e-14)
    assert test.p_value == pytest.approx(1.0)


def test_adjusted_test_reduces_variance_with_prognostic_covariate():
    data = random_trial(300, seed=1, p=2)
    test = adjusted_logrank_test(data, ["x1"])
    assert test.method == "CovariateAdjusted"
    assert 0.0 < test.sigma2_cl < test.sigma2_l
    assert test.coefficients.feature_names == ("x1",)
    assert test.sigma_cl == pytest.approx(np.sqrt(test.sigma2_cl))


def test_adjusted_test_one_sided_p_values():
    data = random_trial(200, seed=12, theta=-0.6)
    two = adjusted_logrank_test(data)
    less = adjusted_logrank_test(data, alternative="less")
    greater = adjusted_logrank_test(data, alternative="greater")
    assert less.p_value + greater.p_value == pytest.approx(1.0)
    assert two.p_value == pytest.approx(2 * min(less.p_value, greater.p_value))


def test_p_value_direction():
    assert p_value(-2.0, "less") < 0.05
    assert p_value(-2.0, "greater") > 0.95
    assert p_value(0.0) == 1.0


def test_fit_unadjusted_uses_model_based_se():
    data = random_trial(100, seed=6)
    fit = fit_unadjusted_hr(data)
    theta = cox_mple(data)
    info = cox_score(data, theta).neg_derivative
    assert fit.method == "Unadjusted"
    assert fit.theta_hat == pytest.approx(theta, abs=1e-12)
    assert fit.se == pytest.approx(1.0 / np.sqrt(data.n * info))
    assert fit.variance_reduction_ratio == 1.0
    assert fit.hr == pytest.approx(np.exp(theta))


def test_fit_adjusted_solves_shifted_score():
    data = random_trial(200, seed=13, theta=-0.4)
    fit = fit_adjusted_hr(data)
    assert fit.method == "CovariateAdjusted"
    assert fit.theta_unadjusted == pytest.approx(cox_mple(data), abs=1e-12)
    assert cox_score(data, fit.theta_hat).value == pytest.approx(fit.augmentation, abs=1e-9)
    assert fit.ci[0] < fit.theta_hat < fit.ci[1]
    assert fit.hr_ci[0] == pytest.approx(np.exp(fit.ci[0]))
    assert 0.0 <= fit.variance_reduction_ratio <= 1.0
    assert fit.se == pytest.approx(np.sqrt(fit.sigma2_CL / (data.n * fit.sigma2_L**2)))


def test_fit_with_noise_covariate_is_close_to_unadjusted():
    rng = np.random.default_rng(0)
    data = random_trial(400, seed=14, p=0)
    data = data.with_covariates(rng.standard_normal(data.n), ["noise"])
    fit = fit_adjusted_hr(data)
    assert abs(fit.theta_hat - fit.theta_unadjusted) < 0.02
    assert fit.variance_reduction_ratio > 0.95


def test_affine_covariate_transform_leaves_results_unchanged():
    data = random_trial(120, seed=21, p=2, theta=-0.3)
    a = np.array([[2.0, 0.5], [-1.0, 3.0]])
    moved = TrialDataset.from_arrays(
        data.time, data.event, data.arm, data.covariates @ a + np.array([5.0, -7.0])
    )
    base_fit, moved_fit = fit_adjusted_hr(data), fit_adjusted_hr(moved)
    assert moved_fit.theta_hat == pytest.approx(base_fit.theta_hat, abs=1e-8)
    assert moved_fit.se == pytest.approx(base_fit.se, abs=1e-8)
    base_test, moved_test = adjusted_logrank_test(data), adjusted_logrank_test(moved)
    assert moved_test.statistic == pytest.approx(base_test.statistic, abs=1e-8)


def test_nonpositive_variance_is_clamped_or_raised():
    diagnostics = Diagnostics()
    assert _floor_variance(0.3, strict=False, diagnostics=diagnostics) == 0.3
    assert not diagnostics
    assert _floor_variance(-0.01, strict=False, diagnostics=diagnostics) == VARIANCE_FLOOR
    assert "clamped" in diagnostics.to_list()[0]
    with pytest.raises(NonpositiveVariance):
        _floor_variance(0.0, strict=True, diagnostics=diagnostics)


def test_solver_matches_grid_search_on_tiny_datasets():
    checked = 0
    for seed in range(200):
        data = tiny_random_trial(seed)
        try:
            theta = cox_mple(data)
        except SurvAdjError:
            continue
        if abs(theta) > 4.5:
            continue
        assert theta == pytest.approx(grid_root(data), abs=1e-3)
        checked += 1
    assert checked >= 50


def test_augmentation_and_pseudo_outcome_identities_on_tiny_datasets():
    checked = 0
    for seed in range(200):
        data = tiny_random_trial(seed)
        if min(np.sum(data.arm == 1), np.sum(data.arm == 0)) < 4 or data.n_events == 0:
            continue
        for theta in (-1.0, 0.0, 1.0):
            try:
                score = cox_score(data, theta).value
            except SurvAdjError:
                break
            po = pseudo_outcomes(data, theta)
            signed = np.where(data.arm == 1, po.values, -po.values).sum() / data.n
            assert signed == pytest.approx(score, abs=1e-10)
        try:
            fit = fit_adjusted_hr(data)
        except SurvAdjError:
            continue
        assert cox_score(data, fit.theta_hat).value == pytest.approx(fit.augmentation, abs=1e-9)
        checked += 1
    assert checked >= 20
