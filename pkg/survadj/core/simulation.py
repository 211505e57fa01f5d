"""Monte Carlo harness for the simulation cases.

A scenario fixes the case, treatment effect, trial size and analysis strategy.
The external cohort and its prognostic model are built once per scenario and
shared read-only by every replicate. Replicates run on a process pool; each
one draws from its own counter-based stream and the results are reduced in
replicate order, so a report does not depend on the worker count.
"""

import logging
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Literal, TypeAlias

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from survadj.core.adjustment import (
    AdjustedFit,
    AdjustedTest,
    adjusted_logrank_test,
    fit_adjusted_hr,
)
from survadj.core.errors import SurvAdjError
from survadj.core.generators import (
    CASES,
    EFFECTS,
    FEATURES,
    Case,
    Effect,
    Stratify,
    case_index,
    effect_theta,
    generate_external,
    generate_trial,
)
from survadj.core.prognostic import ForestParams, PrognosticModel, estimate_rho, score, train
from survadj.core.protocol import TargetKind
from survadj.core.rng import ScenarioStreams
from survadj.core.stratified import fit_stratified_hr, stratified_logrank_test
from survadj.core.survival import TrialDataset

logger = logging.getLogger(__name__)

Strategy: TypeAlias = Literal[
    "ScoreOnly_M",
    "ScorePlusCovariates_M",
    "ScoreOnly_S",
    "ScorePlusCovariates_S",
    "Unadjusted",
]
STRATEGIES: tuple[Strategy, ...] = (
    "ScoreOnly_M",
    "ScorePlusCovariates_M",
    "ScoreOnly_S",
    "ScorePlusCovariates_S",
    "Unadjusted",
)
SCORE_COLUMN = "score"


class ScenarioConfig(BaseModel):
    """One Monte Carlo scenario."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    case: Case = "I"
    effect: Effect = "null"
    n_trial: int = Field(400, ge=10)
    n_external: int = Field(300, ge=10)
    n_replicates: int = Field(10_000, ge=2)
    seed: int = Field(20_251_017, ge=0, lt=2**64)
    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    pi: float = Field(0.5, gt=0.0, lt=1.0)
    strategy: Strategy = "ScoreOnly_M"
    stratify: Stratify = "none"
    n_strata: int = Field(2, ge=1)
    tau_quantile: float | None = Field(None, gt=0.0, le=1.0)
    log_hr: float | None = None
    forest: dict[str, int | float | bool | None] = Field(default_factory=dict)

    @property
    def theta(self) -> float:
        return self.log_hr if self.log_hr is not None else effect_theta(self.effect)

    @property
    def target_kind(self) -> TargetKind:
        return "survival" if self.strategy.endswith("_S") else "martingale"

    @property
    def stratified(self) -> bool:
        return self.stratify != "none"


@dataclass(frozen=True)
class ReplicateResult:
    replicate: int
    theta_unadj: float = float("nan")
    theta_adj: float = float("nan")
    se_unadj: float = float("nan")
    se_adj: float = float("nan")
    reject_unadj: bool = False
    reject_adj: bool = False
    rho_hat: float = float("nan")
    rho_strat: float = float("nan")
    error: str | None = None

    @property
    def degenerate(self) -> bool:
        return self.error is not None


class ScenarioReport(BaseModel):
    """Aggregated operating characteristics of one scenario."""

    case: Case
    effect: Effect
    n_trial: int
    strategy: Strategy
    stratify: Stratify
    log_hr: float
    n_replicates: int
    n_degenerate: int
    degenerate_codes: dict[str, int] = Field(default_factory=dict)
    bias: float
    mean_theta_unadj: float
    mean_theta_adj: float
    reject_rate_unadj: float
    reject_rate_adj: float
    mean_se_unadj: float
    mean_se_adj: float
    mc_sd_unadj: float
    mc_sd_adj: float
    var_ratio: float
    mean_rho: float | None = None
    mean_one_minus_rho2: float | None = None
    mean_rho_strat: float | None = None
    mean_one_minus_rho_strat2: float | None = None


@dataclass(frozen=True)
class ScenarioContext:
    """Read-only state shared by all replicates of a scenario."""

    config: ScenarioConfig
    model: PrognosticModel | None


_WORKER_CONTEXT: ScenarioContext | None = None


def _init_worker(context: ScenarioContext) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = context


def _run_in_worker(replicate: int) -> ReplicateResult:
    assert _WORKER_CONTEXT is not None
    return run_replicate(_WORKER_CONTEXT, replicate)


def build_context(config: ScenarioConfig, forest_defaults: dict | None = None) -> ScenarioContext:
    """Draw the external cohort and train the prognostic model for a scenario."""
    if config.strategy == "Unadjusted":
        return ScenarioContext(config=config, model=None)
    streams = ScenarioStreams(config.seed, case_index(config.case))
    ext = generate_external(config.case, config.n_external, streams.external())
    params = ForestParams.from_dict((forest_defaults or {}) | config.forest)
    model = train(ext, config.target_kind, params, seed=streams.model_seed())
    return ScenarioContext(config=config, model=model)


def _analyse(data: TrialDataset, covariates: Sequence[str] | None, config: ScenarioConfig) -> tuple[AdjustedFit, AdjustedTest]:
    x = np.zeros((data.n, 0)) if covariates is None else list(covariates)
    if config.stratified:
        return fit_stratified_hr(data, x, config.alpha), stratified_logrank_test(data, x)
    return fit_adjusted_hr(data, x, config.alpha), adjusted_logrank_test(data, x)


def run_replicate(context: ScenarioContext, replicate: int) -> ReplicateResult:
    """Generate, score and analyse one trial; errors are recorded, never raised."""
    config = context.config
    streams = ScenarioStreams(config.seed, case_index(config.case))
    rng = streams.replicate(EFFECTS.index(config.effect), config.n_trial, replicate)
    try:
        data = generate_trial(
            config.case,
            config.theta,
            config.n_trial,
            rng,
            pi=config.pi,
            stratify=config.stratify,
            n_strata=config.n_strata,
            tau_quantile=config.tau_quantile,
        )
        unadj_fit, unadj_test = _analyse(data, None, config)
        if context.model is None:
            adj_fit, adj_test = unadj_fit, unadj_test
            rho = rho_strat = float("nan")
        else:
            scores = score(context.model, data)
            scored = data.with_covariates(scores, [SCORE_COLUMN])
            columns = [SCORE_COLUMN] if config.strategy.startswith("ScoreOnly") else [SCORE_COLUMN, *FEATURES]
            adj_fit, adj_test = _analyse(scored, columns, config)
            estimate = estimate_rho(data, scores)
            rho = estimate.rho
            rho_strat = estimate.rho_strat if estimate.rho_strat is not None else float("nan")
    except SurvAdjError as exc:
        logger.debug("[Simulation] replicate %d degenerate: %s", replicate, exc)
        return ReplicateResult(replicate=replicate, error=exc.code)
    return ReplicateResult(
        replicate=replicate,
        theta_unadj=unadj_fit.theta_hat,
        theta_adj=adj_fit.theta_hat,
        se_unadj=unadj_fit.se,
        se_adj=adj_fit.se,
        reject_unadj=unadj_test.p_value < config.alpha,
        reject_adj=adj_test.p_value < config.alpha,
        rho_hat=rho,
        rho_strat=rho_strat,
    )


def _mean_or_none(values: np.ndarray) -> float | None:
    finite = values[np.isfinite(values)]
    return float(finite.mean()) if finite.size else None


def aggregate(config: ScenarioConfig, results: Sequence[ReplicateResult]) -> ScenarioReport:
    """Reduce replicate results, in replicate order, to one report row."""
    ok = [r for r in results if not r.degenerate]
    codes: dict[str, int] = {}
    for r in results:
        if r.error is not None:
            codes[r.error] = codes.get(r.error, 0) + 1
    if len(ok) < 2:
        raise SurvAdjError(f"Only {len(ok)} usable replicates; cannot summarise scenario", {"codes": codes})

    frame = pd.DataFrame([r.__dict__ for r in ok])
    theta_u = frame["theta_unadj"].to_numpy()
    theta_a = frame["theta_adj"].to_numpy()
    rho = frame["rho_hat"].to_numpy()
    rho_strat = frame["rho_strat"].to_numpy()
    var_u = float(np.var(theta_u, ddof=1))
    return ScenarioReport(
        case=config.case,
        effect=config.effect,
        n_trial=config.n_trial,
        strategy=config.strategy,
        stratify=config.stratify,
        log_hr=config.theta,
        n_replicates=len(results),
        n_degenerate=len(results) - len(ok),
        degenerate_codes=codes,
        bias=float(np.mean(np.abs(theta_a - theta_u))),
        mean_theta_unadj=float(theta_u.mean()),
        mean_theta_adj=float(theta_a.mean()),
        reject_rate_unadj=float(frame["reject_unadj"].mean()),
        reject_rate_adj=float(frame["reject_adj"].mean()),
        mean_se_unadj=float(frame["se_unadj"].mean()),
        mean_se_adj=float(frame["se_adj"].mean()),
        mc_sd_unadj=float(np.std(theta_u, ddof=1)),
        mc_sd_adj=float(np.std(theta_a, ddof=1)),
        var_ratio=float(np.var(theta_a, ddof=1) / var_u) if var_u > 0 else float("nan"),
        mean_rho=_mean_or_none(rho),
        mean_one_minus_rho2=_mean_or_none(1.0 - rho**2),
        mean_rho_strat=_mean_or_none(rho_strat),
        mean_one_minus_rho_strat2=_mean_or_none(1.0 - rho_strat**2),
    )


def resolve_workers(workers: int | None = None) -> int:
    """Worker count from the argument, else SURVADJ_WORKERS, else 1."""
    if workers is None:
        workers = int(os.environ.get("SURVADJ_WORKERS", "1"))
    return max(1, workers)


def run_replicates(context: ScenarioContext, workers: int | None = None) -> list[ReplicateResult]:
    workers = resolve_workers(workers)
    replicates = range(context.config.n_replicates)
    if workers == 1:
        return [run_replicate(context, r) for r in replicates]
    chunksize = max(1, context.config.n_replicates // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(context,)) as pool:
        return list(pool.map(_run_in_worker, replicates, chunksize=chunksize))


def run_scenario(
    config: ScenarioConfig, workers: int | None = None, forest_defaults: dict | None = None
) -> ScenarioReport:
    """Run every replicate of a scenario and aggregate.

    Args:
        config: Scenario definition.
        workers: Process count (default from SURVADJ_WORKERS, else 1).
        forest_defaults: Forest hyper-parameters overridden by ``config.forest``.

    Returns:
        ScenarioReport; identical for identical configs regardless of ``workers``.
    """
    logger.info(
        "[Simulation] case %s %s n=%d strategy=%s: %d replicates on %d worker(s)",
        config.case,
        config.effect,
        config.n_trial,
        config.strategy,
        config.n_replicates,
        resolve_workers(workers),
    )
    context = build_context(config, forest_defaults)
    report = aggregate(config, run_replicates(context, workers))
    if report.n_degenerate:
        logger.warning(
            "[Simulation] case %s %s n=%d: %d degenerate replicate(s) %s",
            config.case,
            config.effect,
            config.n_trial,
            report.n_degenerate,
            report.degenerate_codes,
        )
    return report


def scenario_grid(
    cases: Iterable[Case] = CASES,
    effects: Iterable[Effect] = EFFECTS,
    sizes: Iterable[int] = (200, 400),
    **overrides: object,
) -> list[ScenarioConfig]:
    """Configs for every (case, effect, n) combination, sharing the overrides."""
    return [
        ScenarioConfig(case=case, effect=effect, n_trial=n, **overrides)  # type: ignore[arg-type]
        for case in cases
        for effect in effects
        for n in sizes
    ]


def simulate_power_curve(
    config: ScenarioConfig,
    hazard_ratios: Sequence[float],
    workers: int | None = None,
    forest_defaults: dict | None = None,
) -> pd.DataFrame:
    """Simulated unadjusted and adjusted power over a grid of conditional hazard ratios.

    Every grid point reuses the same replicate streams, so the curves share
    common random numbers.
    """
    rows = []
    for hr in hazard_ratios:
        point = config.model_copy(update={"log_hr": float(np.log(hr)), "effect": "efficacy"})
        report = run_scenario(point, workers, forest_defaults)
        rows.append(
            {
                "hr": float(hr),
                "power_unadjusted": report.reject_rate_unadj,
                "power_adjusted": report.reject_rate_adj,
            }
        )
    return pd.DataFrame(rows, columns=["hr", "power_unadjusted", "power_adjusted"])
