"""JSON report models for CLI output and their human-readable tables.

Every report carries ``schema_version``; bump it whenever a field changes.
"""

from typing import Any, Literal

import pandas as pd
from pydantic import BaseModel, Field

from survadj.core.adjustment import AdjustedFit, AdjustedTest
from survadj.core.design import DesignOutput
from survadj.core.prognostic import PrognosticModel, RhoEstimate
from survadj.core.simulation import ScenarioReport
from survadj.utils.manifest import RunManifest

SCHEMA_VERSION = "1.0"


class Report(BaseModel):
    schema_version: str = SCHEMA_VERSION
    kind: str


class FitReport(Report):
    kind: Literal["fit"] = "fit"
    method: str
    theta_hat: float
    hr: float
    se: float
    ci: tuple[float, float]
    hr_ci: tuple[float, float]
    alpha: float
    z_stat: float
    p_value_two_sided: float
    sigma2_L: float
    sigma2_CL: float
    variance_reduction_ratio: float
    theta_unadjusted: float
    n: int
    n_events: int
    covariates: list[str] = Field(default_factory=list)
    strata: list[dict[str, float | int]] | None = None
    rho: float | None = None
    diagnostics: list[str] = Field(default_factory=list)

    @classmethod
    def from_fit(cls, fit: AdjustedFit, **extra: Any) -> "FitReport":
        return cls(
            method=fit.method,
            theta_hat=fit.theta_hat,
            hr=fit.hr,
            se=fit.se,
            ci=fit.ci,
            hr_ci=fit.hr_ci,
            alpha=fit.alpha,
            z_stat=fit.z_stat,
            p_value_two_sided=fit.p_value_two_sided,
            sigma2_L=fit.sigma2_L,
            sigma2_CL=fit.sigma2_CL,
            variance_reduction_ratio=fit.variance_reduction_ratio,
            theta_unadjusted=fit.theta_unadjusted,
            n=fit.n,
            n_events=fit.n_events,
            covariates=list(fit.coefficients.feature_names) if fit.coefficients else [],
            diagnostics=fit.diagnostics,
            **extra,
        )


class TestReport(Report):
    kind: Literal["test"] = "test"
    method: str
    statistic: float
    statistic_unadjusted: float
    p_value: float
    alternative: str
    u_l: float
    u_cl: float
    sigma2_l: float
    sigma2_cl: float
    n: int
    n_events: int
    covariates: list[str] = Field(default_factory=list)
    strata: list[dict[str, float | int]] | None = None
    diagnostics: list[str] = Field(default_factory=list)

    @classmethod
    def from_test(cls, test: AdjustedTest, **extra: Any) -> "TestReport":
        return cls(
            method=test.method,
            statistic=test.statistic,
            statistic_unadjusted=test.statistic_unadjusted,
            p_value=test.p_value,
            alternative=test.alternative,
            u_l=test.u_l,
            u_cl=test.u_cl,
            sigma2_l=test.sigma2_l,
            sigma2_cl=test.sigma2_cl,
            n=test.n,
            n_events=test.n_events,
            covariates=list(test.coefficients.feature_names) if test.coefficients else [],
            diagnostics=test.diagnostics,
            **extra,
        )


class DesignReport(Report):
    kind: Literal["design"] = "design"
    rho: float
    stratified: bool
    variance_ratio: float
    d_unadj: int
    d_adj: int
    events_saved: int
    power_at_fixed_events: float
    alpha: float
    power: float
    log_hr: float | None = None
    pi: float
    power_curve: list[dict[str, float]] | None = None

    @classmethod
    def from_output(cls, out: DesignOutput, **extra: Any) -> "DesignReport":
        return cls(
            rho=out.rho,
            stratified=out.stratified,
            variance_ratio=out.variance_ratio,
            d_unadj=out.d_unadj,
            d_adj=out.d_adj,
            events_saved=out.events_saved,
            power_at_fixed_events=out.power_at_fixed_events,
            **extra,
        )


class TrainReport(Report):
    kind: Literal["train"] = "train"
    model_id: str
    model_path: str
    target_kind: str
    at_time: float | None = None
    feature_names: list[str]
    training_summary: dict[str, Any]
    hyperparams: dict[str, Any]
    diagnostics: list[str] = Field(default_factory=list)

    @classmethod
    def from_model(cls, model: PrognosticModel, model_path: str, diagnostics: list[str]) -> "TrainReport":
        return cls(
            model_id=model.model_id,
            model_path=model_path,
            target_kind=model.target_kind,
            at_time=model.at_time,
            feature_names=list(model.feature_names),
            training_summary=dict(model.training_summary),
            hyperparams=model.hyperparams,
            diagnostics=diagnostics,
        )


class ScoreReport(Report):
    kind: Literal["score"] = "score"
    model_id: str
    n: int
    score_mean: float
    score_std: float
    rho: float
    rho_strat: float | None = None
    one_minus_rho2: float
    zero_variance: bool = False
    scores_path: str | None = None

    @classmethod
    def from_estimate(
        cls, model_id: str, mean: float, std: float, estimate: RhoEstimate, scores_path: str | None
    ) -> "ScoreReport":
        return cls(
            model_id=model_id,
            n=estimate.n_used,
            score_mean=mean,
            score_std=std,
            rho=estimate.rho,
            rho_strat=estimate.rho_strat,
            one_minus_rho2=estimate.variance_ratio,
            zero_variance=estimate.zero_variance,
            scores_path=scores_path,
        )


class SimulateReport(Report):
    kind: Literal["simulate"] = "simulate"
    seed: int
    scenarios: list[ScenarioReport] = Field(default_factory=list)
    power_curve: list[dict[str, float]] | None = None


class ErrorReport(BaseModel):
    error: dict[str, Any]


REPORT_MODELS: dict[str, type[BaseModel]] = {
    "fit": FitReport,
    "test": TestReport,
    "design": DesignReport,
    "train": TrainReport,
    "score": ScoreReport,
    "simulate": SimulateReport,
    "manifest": RunManifest,
}

# Column labels for simulation summaries
SIMULATION_COLUMNS = {
    "case": "Case",
    "effect": "Effect",
    "n_trial": "n",
    "bias": "Bias",
    "reject_rate_unadj": "Pr.Rej Unadj",
    "reject_rate_adj": "Pr.Rej Cov-Adj",
    "mean_se_adj": "MSE",
    "mc_sd_adj": "MCSD",
    "var_ratio": "Var ratio",
    "mean_rho": "rho",
    "mean_one_minus_rho2": "1-rho^2",
    "mean_one_minus_rho_strat2": "1-rho_strat^2",
    "n_degenerate": "Degenerate",
}


def simulation_frame(report: SimulateReport) -> pd.DataFrame:
    rows = [s.model_dump() for s in report.scenarios]
    frame = pd.DataFrame(rows)
    if frame.empty:
        return frame
    columns = [c for c in SIMULATION_COLUMNS if c in frame.columns]
    return frame[columns].rename(columns=SIMULATION_COLUMNS)


def render_table(report: BaseModel) -> str:
    """Human-readable rendering of a report."""
    if isinstance(report, SimulateReport):
        parts = [simulation_frame(report).to_string(index=False, float_format=lambda v: f"{v:.3f}")]
        if report.power_curve:
            parts.append(pd.DataFrame(report.power_curve).to_string(index=False, float_format=lambda v: f"{v:.3f}"))
        return "\n\n".join(parts)

    data = report.model_dump()
    nested = {k: data.pop(k) for k in ("strata", "power_curve") if isinstance(data.get(k), list)}
    diagnostics = data.pop("diagnostics", []) or []
    lines = [f"{key:<26} {_format_value(value)}" for key, value in data.items()]
    for key, rows in nested.items():
        lines.append("")
        lines.append(f"{key}:")
        lines.append(pd.DataFrame(rows).to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    if diagnostics:
        lines.append("")
        lines.append("diagnostics:")
        lines.extend(f"  - {message}" for message in diagnostics)
    return "\n".join(lines)


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)) and value and all(isinstance(v, float) for v in value):
        return "(" + ", ".join(f"{v:.6g}" for v in value) + ")"
    return str(value)
