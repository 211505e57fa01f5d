"""Stratified score, pseudo-outcomes and covariate-adjusted estimator.

For trials randomized within strata (stratified permuted blocks, minimization)
the score is a sum of stratum-local Cox scores and the augmentation uses
covariates centered at their stratum means. All computations share the
engine in ``adjustment.py``; with a single stratum every output equals its
unstratified counterpart exactly.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from survadj.core.adjustment import (
    AdjustedFit,
    AdjustedTest,
    AdjustmentCoefficients,
    CovariateView,
    PseudoOutcomes,
    build_pseudo_outcomes,
    estimate_log_hr,
    event_tables,
    fit_coefficients,
    resolve_covariates,
    score_test,
)
from survadj.core.errors import StratumDegenerate, ValidationError
from survadj.core.protocol import Alternative, Diagnostics, Method
from survadj.core.survival import (
    EventTable,
    ScoreEvaluation,
    TrialDataset,
    check_scoreable,
    score_from_tables,
)

logger = logging.getLogger(__name__)

SMALL_STRATUM = 10


@dataclass(frozen=True, eq=False)
class StratumView:
    """One stratum's members and its event table (counts are stratum-local)."""

    label: int
    members: NDArray[np.int64]
    share: float
    n_treated: int
    n_control: int
    imbalance: float
    table: EventTable

    @property
    def size(self) -> int:
        return int(self.members.size)

    @property
    def n_events(self) -> int:
        return self.table.n_events


@dataclass(frozen=True, eq=False)
class StratifiedCoefficients(AdjustmentCoefficients):
    """Pooled within-stratum coefficients; ``sigma_x`` is the pooled within-stratum covariance."""

    @property
    def gamma1(self) -> NDArray[np.float64]:
        return self.beta1

    @property
    def gamma0(self) -> NDArray[np.float64]:
        return self.beta0

    @property
    def pooled_within_cov(self) -> NDArray[np.float64]:
        return self.sigma_x


def stratum_labels(data: TrialDataset) -> NDArray[np.int64]:
    if data.stratum is None:
        raise ValidationError("Stratified analysis requires a stratum column")
    return data.stratum


def stratum_views(data: TrialDataset, diagnostics: Diagnostics | None = None) -> list[StratumView]:
    """Split the dataset into strata (ascending label order) and check each one.

    Raises:
        StratumDegenerate: if a stratum has events but contributes no information,
            i.e. only one arm is ever at risk at its event times.
    """
    labels = stratum_labels(data)
    tables = event_tables(data, labels)
    views = []
    for z, table in zip(np.unique(labels), tables, strict=True):
        arms = data.arm[table.members]
        n_z = table.members.size
        n1 = int(arms.sum())
        view = StratumView(
            label=int(z),
            members=table.members,
            share=n_z / data.n,
            n_treated=n1,
            n_control=n_z - n1,
            imbalance=float(n1 / n_z - data.pi),
            table=table,
        )
        if view.n_events and table.score_terms(0.0)[1] <= 0.0:
            reason = "only one arm present" if n1 in (0, n_z) else "one arm never at risk at its event times"
            raise StratumDegenerate(view.label, reason)
        if n_z < SMALL_STRATUM:
            message = f"stratum {view.label} has only {n_z} subjects"
            logger.warning("[Stratified] %s", message)
            if diagnostics is not None:
                diagnostics.add(message)
        views.append(view)
    return views


def stratified_score(data: TrialDataset, theta: float) -> ScoreEvaluation:
    """Sum of stratum-local Cox scores and the stratified observed information."""
    views = stratum_views(data)
    tables = [view.table for view in views]
    check_scoreable(tables, data.n)
    return score_from_tables(tables, data.n, theta)


def stratified_pseudo_outcomes(data: TrialDataset, theta: float) -> PseudoOutcomes:
    """Pseudo-outcomes computed against each subject's own stratum risk sets."""
    tables = [view.table for view in stratum_views(data)]
    return build_pseudo_outcomes(data, tables, theta)


def fit_gammas(
    data: TrialDataset, po: PseudoOutcomes, covariates: CovariateView = None
) -> StratifiedCoefficients:
    """Arm-specific within-stratum regressions pooled across strata."""
    x, names = resolve_covariates(data, covariates)
    # The regressions center on stratum-by-arm means; the augmentation term centers on the
    # whole-stratum mean. With one stratum this reduces exactly to fit_betas.
    coef = fit_coefficients(data, po.values, po.theta, x, names, stratum_labels(data), Diagnostics())
    return StratifiedCoefficients(
        beta1=coef.beta1,
        beta0=coef.beta0,
        theta_at=coef.theta_at,
        sigma_x=coef.sigma_x,
        pi_hat=coef.pi_hat,
        feature_names=coef.feature_names,
        dropped_directions=coef.dropped_directions,
    )


def fit_stratified_hr(
    data: TrialDataset,
    covariates: CovariateView = None,
    alpha: float = 0.05,
    strict: bool = False,
) -> AdjustedFit:
    """Covariate-adjusted stratified estimator of the unconditional log hazard ratio.

    With no covariates selected this is the stratified Cox estimator with its
    model-based standard error.
    """
    diagnostics = Diagnostics()
    stratum_views(data, diagnostics)
    x, names = resolve_covariates(data, covariates)
    method: Method = "StratifiedCovariateAdjusted" if x.shape[1] else "StratifiedUnadjusted"
    return estimate_log_hr(data, x, names, stratum_labels(data), method, alpha, strict, diagnostics)


def stratified_logrank_test(
    data: TrialDataset,
    covariates: CovariateView = None,
    alternative: Alternative = "two-sided",
    strict: bool = False,
) -> AdjustedTest:
    """Stratified (optionally covariate-adjusted) log-rank test."""
    diagnostics = Diagnostics()
    stratum_views(data, diagnostics)
    x, names = resolve_covariates(data, covariates)
    method: Method = "StratifiedCovariateAdjusted" if x.shape[1] else "StratifiedUnadjusted"
    return score_test(data, x, names, stratum_labels(data), method, alternative, strict, diagnostics)


def stratum_summary(data: TrialDataset) -> list[dict[str, float | int]]:
    """Per-stratum size, share, arm counts, events and observed imbalance n_z1/n_z - pi."""
    return [
        {
            "stratum": view.label,
            "n": view.size,
            "share": view.share,
            "n_treated": view.n_treated,
            "n_control": view.n_control,
            "events": view.n_events,
            "imbalance": view.imbalance,
        }
        for view in stratum_views(data)
    ]
