"""Covariate-adjusted log-rank test and unconditional hazard-ratio estimator.

The adjustment augments the unadjusted Cox score with a mean-zero term built
from baseline covariates:

    U_CL(theta) = U_L(theta) - n^-1 sum_i {I_i (X_i - Xbar)' b1 - (1 - I_i)(X_i - Xbar)' b0}

where b_j are arm-specific least-squares coefficients of the per-subject
pseudo-outcomes on the covariates. The augmentation is evaluated once (at
theta = 0 for the test, at the unadjusted root for the estimator), so solving
U_CL(theta) = 0 reuses the monotone root finder of the unadjusted score.

Every computation here runs over a list of event tables and a vector of group
labels. The unstratified functions use a single group; ``stratified.py`` passes
one group per stratum through the same code path.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import pinvh
from scipy.stats import norm

from survadj.core.errors import NonpositiveVariance, SingularDesign, ValidationError
from survadj.core.protocol import Alternative, Diagnostics, FloatArray, Method
from survadj.core.survival import (
    EventTable,
    THETA_MAX,
    TrialDataset,
    build_event_table,
    check_scoreable,
    score_from_tables,
    solve_score,
)

logger = logging.getLogger(__name__)

CovariateView: TypeAlias = Sequence[str] | NDArray[np.float64] | None

VARIANCE_FLOOR = 1e-12
IDENTITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PseudoOutcomes:
    """Per-subject pseudo-outcomes at ``theta``; each subject carries its own arm's value."""

    theta: float
    values: FloatArray
    arm_means: tuple[float, float]


@dataclass(frozen=True, eq=False)
class AdjustmentCoefficients:
    """Arm-specific regression coefficients and the covariance used for the variance reduction.

    For stratified fits ``sigma_x`` is the pooled within-stratum covariance and
    the coefficients are the pooled within-stratum regressions.
    """

    beta1: FloatArray
    beta0: FloatArray
    theta_at: float
    sigma_x: FloatArray
    pi_hat: float
    feature_names: tuple[str, ...] = ()
    dropped_directions: int = 0

    @property
    def p(self) -> int:
        return int(self.beta1.shape[0])

    def variance_reduction(self) -> float:
        """pi(1 - pi) (b1 + b0)' Sigma_X (b1 + b0)."""
        if self.p == 0:
            return 0.0
        b = self.beta1 + self.beta0
        return float(self.pi_hat * (1.0 - self.pi_hat) * (b @ self.sigma_x @ b))


@dataclass
class AdjustedTest:
    """Adjusted (or plain) log-rank score test at theta = 0."""

    u_l: float
    u_cl: float
    sigma2_l: float
    sigma2_cl: float
    statistic: float
    statistic_unadjusted: float
    p_value: float
    alternative: Alternative
    method: Method
    n: int
    n_events: int
    coefficients: AdjustmentCoefficients | None = None
    diagnostics: list[str] = field(default_factory=list)

    @property
    def sigma_cl(self) -> float:
        return float(np.sqrt(self.sigma2_cl))


@dataclass
class AdjustedFit:
    """Log hazard-ratio estimate with model-free standard error and confidence interval."""

    theta_hat: float
    se: float
    ci: tuple[float, float]
    z_stat: float
    p_value_two_sided: float
    sigma2_L: float
    sigma2_CL: float
    variance_reduction_ratio: float
    method: Method
    alpha: float
    n: int
    n_events: int
    theta_unadjusted: float
    augmentation: float = 0.0
    coefficients: AdjustmentCoefficients | None = None
    diagnostics: list[str] = field(default_factory=list)

    @property
    def hr(self) -> float:
        return float(np.exp(self.theta_hat))

    @property
    def hr_ci(self) -> tuple[float, float]:
        return float(np.exp(self.ci[0])), float(np.exp(self.ci[1]))


def resolve_covariates(data: TrialDataset, covariates: CovariateView) -> tuple[FloatArray, tuple[str, ...]]:
    """Turn a covariate selection into a design matrix.

    Args:
        data: Trial dataset.
        covariates: ``None`` for every dataset covariate, a list of column names,
            or an explicit (n, p) array.

    Returns:
        The (n, p) matrix and its column names.
    """
    if covariates is None:
        return data.covariates, data.feature_names
    if isinstance(covariates, np.ndarray):
        x = np.asarray(covariates, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.shape[0] != data.n:
            raise ValidationError("Covariate matrix rows do not match the dataset")
        if not np.all(np.isfinite(x)):
            raise ValidationError("Covariates must be finite")
        return x, tuple(f"x{k + 1}" for k in range(x.shape[1]))
    names = tuple(covariates)
    return data.covariate_columns(names), names


def event_tables(data: TrialDataset, labels: NDArray[np.int64]) -> list[EventTable]:
    """One event table per group label, in ascending label order."""
    return [build_event_table(data, np.flatnonzero(labels == z)) for z in np.unique(labels)]


def pooled_labels(data: TrialDataset) -> NDArray[np.int64]:
    return np.zeros(data.n, dtype=np.int64)


def pseudo_outcome_values(data: TrialDataset, tables: Sequence[EventTable], theta: float) -> FloatArray:
    """Pseudo-outcomes of every subject, each computed against its own group's risk sets.

    For arm 1 the weight is Y0/(e^theta Y1 + Y0), for arm 0 it is e^theta Y1/(e^theta Y1 + Y0).
    A subject collects its weight at its own event time and loses the weighted
    compensator increment at every event time where it is still at risk.
    """
    values = np.zeros(data.n, dtype=np.float64)
    e = np.exp(theta)
    for table in tables:
        if table.times.size == 0:
            continue
        rows = table.members
        denom = e * table.y1 + table.y0
        w1 = table.y0 / denom
        w0 = e * table.y1 / denom
        comp1 = np.concatenate([[0.0], np.cumsum(w1 * e * table.d / denom)])
        comp0 = np.concatenate([[0.0], np.cumsum(w0 * table.d / denom)])

        time = data.time[rows]
        treated = data.arm[rows] == 1
        observed = data.observed_event[rows]
        n_at_risk_events = np.searchsorted(table.times, time, side="right")
        own = np.minimum(np.searchsorted(table.times, time, side="left"), table.times.size - 1)

        own_weight = np.where(treated, w1[own], w0[own]) * observed
        compensator = np.where(treated, comp1[n_at_risk_events], comp0[n_at_risk_events])
        values[rows] = own_weight - compensator
    return values


def _check_score_identity(data: TrialDataset, values: FloatArray, score_value: float, theta: float) -> None:
    signed = np.where(data.arm == 1, values, -values)
    total = float(signed.sum() / data.n)
    if abs(total - score_value) > IDENTITY_TOL * max(1.0, abs(score_value)):
        raise AssertionError(
            f"Pseudo-outcome identity violated at theta={theta}: {total!r} != {score_value!r}"
        )


def build_pseudo_outcomes(data: TrialDataset, tables: Sequence[EventTable], theta: float) -> PseudoOutcomes:
    values = pseudo_outcome_values(data, tables, theta)
    _check_score_identity(data, values, score_from_tables(tables, data.n, theta).value, theta)
    return PseudoOutcomes(
        theta=float(theta),
        values=values,
        arm_means=(float(values[data.arm == 0].mean()), float(values[data.arm == 1].mean())),
    )


def pseudo_outcomes(data: TrialDataset, theta: float) -> PseudoOutcomes:
    """Pseudo-outcomes O_i1(theta) for treated and O_i0(theta) for control subjects."""
    return build_pseudo_outcomes(data, [build_event_table(data)], theta)


def _center_within(x: FloatArray, labels: NDArray[np.int64]) -> FloatArray:
    centered = x.copy()
    for z in np.unique(labels):
        sel = labels == z
        centered[sel] -= x[sel].mean(axis=0)
    return centered


def _solve_arm_regression(
    x: FloatArray, y: FloatArray, labels: NDArray[np.int64], arm_label: int, diagnostics: Diagnostics
) -> tuple[FloatArray, int]:
    p = x.shape[1]
    if x.shape[0] < p + 2:
        raise SingularDesign(
            f"Arm {arm_label} has {x.shape[0]} subjects; at least {p + 2} are needed for {p} covariates",
            {"arm": arm_label, "n_arm": int(x.shape[0]), "p": p},
        )
    centered = _center_within(x, labels)
    gram = centered.T @ centered
    atol = 1e-10 * float(np.trace(gram)) + 1e-14 * float(np.sum(x * x))
    gram_inv, rank = pinvh(gram, atol=atol, rtol=0.0, return_rank=True)
    dropped = p - int(rank)
    if dropped:
        message = f"arm {arm_label}: dropped {dropped} degenerate covariate direction(s)"
        logger.warning("[Adjustment] %s", message)
        diagnostics.add(message)
    return gram_inv @ (centered.T @ y), dropped


def pooled_within_covariance(x: FloatArray, labels: NDArray[np.int64]) -> FloatArray:
    """Covariance of x around its group means, divisor n minus the number of groups."""
    n, p = x.shape
    dof = n - np.unique(labels).size
    if p == 0:
        return np.zeros((0, 0))
    if dof <= 0:
        raise SingularDesign("Too few subjects to estimate the covariate covariance")
    centered = _center_within(x, labels)
    return (centered.T @ centered) / dof


def fit_coefficients(
    data: TrialDataset,
    values: FloatArray,
    theta: float,
    x: FloatArray,
    names: tuple[str, ...],
    labels: NDArray[np.int64],
    diagnostics: Diagnostics,
) -> AdjustmentCoefficients:
    """Arm-specific regressions of pseudo-outcomes on covariates centered within (group, arm)."""
    p = x.shape[1]
    if p == 0:
        empty = np.zeros(0)
        return AdjustmentCoefficients(empty, empty, float(theta), np.zeros((0, 0)), data.pi_hat, names)
    betas: dict[int, FloatArray] = {}
    dropped = 0
    for j in (1, 0):
        mask = data.arm == j
        betas[j], d = _solve_arm_regression(x[mask], values[mask], labels[mask], j, diagnostics)
        dropped = max(dropped, d)
    return AdjustmentCoefficients(
        beta1=betas[1],
        beta0=betas[0],
        theta_at=float(theta),
        sigma_x=pooled_within_covariance(x, labels),
        pi_hat=data.pi_hat,
        feature_names=names,
        dropped_directions=dropped,
    )


def fit_betas(
    data: TrialDataset, po: PseudoOutcomes, covariates: CovariateView = None
) -> AdjustmentCoefficients:
    """Arm-specific coefficients beta_j(theta) for the given pseudo-outcomes.

    Degenerate covariate directions (constant or collinear columns) are dropped
    with a warning instead of failing.

    Raises:
        SingularDesign: if an arm has fewer than p + 2 subjects.
    """
    x, names = resolve_covariates(data, covariates)
    return fit_coefficients(data, po.values, po.theta, x, names, pooled_labels(data), Diagnostics())


def augmentation_constant(
    data: TrialDataset, x: FloatArray, labels: NDArray[np.int64], coef: AdjustmentCoefficients
) -> float:
    """n^-1 sum {I_i (X_i - Xbar_g)' b1 - (1 - I_i)(X_i - Xbar_g)' b0}, Xbar_g the group mean."""
    if coef.p == 0:
        return 0.0
    centered = _center_within(x, labels)
    treated = data.arm == 1
    terms = np.where(treated, centered @ coef.beta1, -(centered @ coef.beta0))
    return float(terms.sum() / data.n)


def _floor_variance(sigma2: float, strict: bool, diagnostics: Diagnostics) -> float:
    if sigma2 > VARIANCE_FLOOR:
        return sigma2
    if strict:
        raise NonpositiveVariance(f"Adjusted variance is not positive ({sigma2:.3g})", {"sigma2": sigma2})
    message = f"adjusted variance {sigma2:.3g} clamped to {VARIANCE_FLOOR:g}"
    logger.warning("[Adjustment] %s", message)
    diagnostics.add(message)
    return VARIANCE_FLOOR


def p_value(statistic: float, alternative: Alternative = "two-sided") -> float:
    """Normal p-value; "less" rejects for small statistics (treatment lowers the hazard)."""
    if alternative == "two-sided":
        return float(min(1.0, 2.0 * norm.sf(abs(statistic))))
    if alternative == "less":
        return float(norm.cdf(statistic))
    if alternative == "greater":
        return float(norm.sf(statistic))
    raise ValidationError(f"Unknown alternative: {alternative}")


def score_test(
    data: TrialDataset,
    x: FloatArray,
    names: tuple[str, ...],
    labels: NDArray[np.int64],
    method: Method,
    alternative: Alternative = "two-sided",
    strict: bool = False,
    diagnostics: Diagnostics | None = None,
) -> AdjustedTest:
    """Score test at theta = 0 over the groups given by ``labels``."""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    tables = event_tables(data, labels)
    check_scoreable(tables, data.n)
    score0 = score_from_tables(tables, data.n, 0.0)
    po = build_pseudo_outcomes(data, tables, 0.0)
    coef = fit_coefficients(data, po.values, 0.0, x, names, labels, diagnostics)

    u_cl = score0.value - augmentation_constant(data, x, labels, coef)
    sigma2_cl = _floor_variance(score0.neg_derivative - coef.variance_reduction(), strict, diagnostics)
    root_n = np.sqrt(data.n)
    statistic = float(root_n * u_cl / np.sqrt(sigma2_cl))
    logger.debug("[Adjustment] %s test: U_L=%.6g U_CL=%.6g T=%.4f", method, score0.value, u_cl, statistic)
    return AdjustedTest(
        u_l=score0.value,
        u_cl=float(u_cl),
        sigma2_l=score0.neg_derivative,
        sigma2_cl=float(sigma2_cl),
        statistic=statistic,
        statistic_unadjusted=float(root_n * score0.value / np.sqrt(score0.neg_derivative)),
        p_value=p_value(statistic, alternative),
        alternative=alternative,
        method=method,
        n=data.n,
        n_events=data.n_events,
        coefficients=coef if coef.p else None,
        diagnostics=diagnostics.to_list(),
    )


def estimate_log_hr(
    data: TrialDataset,
    x: FloatArray,
    names: tuple[str, ...],
    labels: NDArray[np.int64],
    method: Method,
    alpha: float = 0.05,
    strict: bool = False,
    diagnostics: Diagnostics | None = None,
    theta_max: float = THETA_MAX,
) -> AdjustedFit:
    """Root of the (augmented) score over the groups given by ``labels``, with its sandwich SE."""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    tables = event_tables(data, labels)
    check_scoreable(tables, data.n)

    def score(theta: float) -> float:
        return score_from_tables(tables, data.n, theta).value

    theta_l = solve_score(score, theta_max)
    po = build_pseudo_outcomes(data, tables, theta_l)
    coef = fit_coefficients(data, po.values, theta_l, x, names, labels, diagnostics)
    shift = augmentation_constant(data, x, labels, coef)
    theta_cl = solve_score(lambda theta: score(theta) - shift, theta_max) if coef.p else theta_l

    info = score_from_tables(tables, data.n, theta_cl).neg_derivative
    sigma2_cl = _floor_variance(info - coef.variance_reduction(), strict, diagnostics)
    se = float(np.sqrt(sigma2_cl / (data.n * info**2)))
    z = float(norm.ppf(1.0 - alpha / 2.0))
    z_stat = theta_cl / se
    logger.debug("[Adjustment] %s fit: theta_L=%.6g theta_CL=%.6g se=%.4g", method, theta_l, theta_cl, se)
    return AdjustedFit(
        theta_hat=float(theta_cl),
        se=se,
        ci=(float(theta_cl - z * se), float(theta_cl + z * se)),
        z_stat=float(z_stat),
        p_value_two_sided=p_value(z_stat),
        sigma2_L=float(info),
        sigma2_CL=float(sigma2_cl),
        variance_reduction_ratio=float(np.clip(sigma2_cl / info, 0.0, 1.0)),
        method=method,
        alpha=alpha,
        n=data.n,
        n_events=data.n_events,
        theta_unadjusted=float(theta_l),
        augmentation=float(shift),
        coefficients=coef if coef.p else None,
        diagnostics=diagnostics.to_list(),
    )


def adjusted_logrank_test(
    data: TrialDataset,
    covariates: CovariateView = None,
    alternative: Alternative = "two-sided",
    strict: bool = False,
) -> AdjustedTest:
    """Covariate-adjusted log-rank test T_CL.

    Args:
        data: Trial dataset.
        covariates: Covariate selection (see :func:`resolve_covariates`).
        alternative: "two-sided" (default), or one-sided "less" / "greater".
        strict: Raise NonpositiveVariance instead of clamping a nonpositive variance.

    Returns:
        AdjustedTest; with no covariates it is the ordinary log-rank test.
    """
    x, names = resolve_covariates(data, covariates)
    method: Method = "CovariateAdjusted" if x.shape[1] else "Unadjusted"
    return score_test(data, x, names, pooled_labels(data), method, alternative, strict)


def logrank_test(data: TrialDataset, alternative: Alternative = "two-sided") -> AdjustedTest:
    """Unadjusted log-rank test T_L."""
    return adjusted_logrank_test(data, np.zeros((data.n, 0)), alternative)


def fit_adjusted_hr(
    data: TrialDataset,
    covariates: CovariateView = None,
    alpha: float = 0.05,
    strict: bool = False,
) -> AdjustedFit:
    """Covariate-adjusted estimator of the unconditional log hazard ratio.

    Args:
        data: Trial dataset.
        covariates: Covariate selection (see :func:`resolve_covariates`).
        alpha: Two-sided level of the confidence interval.
        strict: Raise NonpositiveVariance instead of clamping.

    Returns:
        AdjustedFit with method "CovariateAdjusted" (or "Unadjusted" when no
        covariates are selected).
    """
    x, names = resolve_covariates(data, covariates)
    method: Method = "CovariateAdjusted" if x.shape[1] else "Unadjusted"
    return estimate_log_hr(data, x, names, pooled_labels(data), method, alpha, strict)


def fit_unadjusted_hr(data: TrialDataset, alpha: float = 0.05) -> AdjustedFit:
    """Partial likelihood estimate with model-based SE 1/sqrt(n I(theta_L))."""
    return fit_adjusted_hr(data, np.zeros((data.n, 0)), alpha)
