"""Data-generating mechanisms for the seven simulation cases.

Trial subjects carry three baseline covariates: X1 ~ Bern(0.5), X2 ~ N(0, 1)
and a noise covariate X3 ~ N(0, 1). Cases I-V use a Cox model with a
nonlinear covariate effect, Case VI a log-normal AFT model and Case VII a
two-piece exponential model with covariate effects that change at t = 5.
Censoring is independent Exp(0.02) throughout.
"""

import logging
from dataclasses import dataclass
from typing import Literal, TypeAlias

import numpy as np

from survadj.core.errors import ValidationError
from survadj.core.prognostic import ExternalControls
from survadj.core.survival import TrialDataset

logger = logging.getLogger(__name__)

Case: TypeAlias = Literal["I", "II", "III", "IV", "V", "VI", "VII"]
Effect: TypeAlias = Literal["null", "efficacy"]
Stratify: TypeAlias = Literal["none", "independent", "x1"]

CASES: tuple[Case, ...] = ("I", "II", "III", "IV", "V", "VI", "VII")
EFFECTS: tuple[Effect, ...] = ("null", "efficacy")
FEATURES = ("x1", "x2", "x3")


@dataclass(frozen=True)
class SimulationConstants:
    h0: float = 0.08
    beta1: float = float(np.log(1.8))
    beta2: float = float(np.log(3.0))
    intercept: float = 0.8
    censor_rate: float = 0.02
    theta_efficacy: float = float(np.log(0.6))
    trial_sigma: float = 0.5
    external_sigma: float = 0.7
    change_point: float = 5.0
    c_treatment: tuple[float, float] = (0.8, 1.2)
    c_interaction: tuple[float, float] = (0.8, 1.2)
    c_quadratic: tuple[float, float] = (1.2, 0.8)


CONSTANTS = SimulationConstants()


def case_index(case: Case) -> int:
    if case not in CASES:
        raise ValidationError(f"Unknown simulation case: {case}")
    return CASES.index(case)


def effect_theta(effect: Effect, constants: SimulationConstants = CONSTANTS) -> float:
    return 0.0 if effect == "null" else constants.theta_efficacy


def draw_covariates(n: int, rng: np.random.Generator) -> np.ndarray:
    x1 = rng.binomial(1, 0.5, size=n).astype(np.float64)
    x2 = rng.standard_normal(n)
    x3 = rng.standard_normal(n)
    return np.column_stack([x1, x2, x3])


def assign_arms(
    n: int,
    pi: float,
    rng: np.random.Generator,
    strata: np.ndarray | None = None,
    block_size: int = 4,
) -> np.ndarray:
    """Simple Bernoulli(pi) randomization, or permuted blocks within each stratum."""
    if strata is None:
        return rng.binomial(1, pi, size=n).astype(np.int64)
    treated_per_block = int(round(block_size * pi))
    block = np.array([1] * treated_per_block + [0] * (block_size - treated_per_block), dtype=np.int64)
    arm = np.empty(n, dtype=np.int64)
    for z in np.unique(strata):
        rows = np.flatnonzero(strata == z)
        n_blocks = -(-rows.size // block_size)
        sequence = np.concatenate([rng.permutation(block) for _ in range(n_blocks)])
        arm[rows] = sequence[: rows.size]
    return arm


def cox_log_rate(x: np.ndarray, treatment: np.ndarray, theta: float, c: SimulationConstants = CONSTANTS) -> np.ndarray:
    """log h0 + 0.8 + theta j + beta1 X1 |X2| - beta2 (X2 - 0.5)^2."""
    x1, x2 = x[:, 0], x[:, 1]
    return np.log(c.h0) + c.intercept + theta * treatment + c.beta1 * x1 * np.abs(x2) - c.beta2 * (x2 - 0.5) ** 2


def _piecewise_times(x: np.ndarray, treatment: np.ndarray, theta: float, rng: np.random.Generator) -> np.ndarray:
    c = CONSTANTS
    x1, x2 = x[:, 0], x[:, 1]
    rates = []
    for k in (0, 1):
        rates.append(
            c.h0
            * np.exp(
                c.intercept
                + c.c_treatment[k] * theta * treatment
                + c.c_interaction[k] * c.beta1 * x1 * np.abs(x2)
                - c.c_quadratic[k] * c.beta2 * (x2 - 0.5) ** 2
            )
        )
    return invert_two_piece(rng.exponential(1.0, size=x.shape[0]), rates[0], rates[1], c.change_point)


def invert_two_piece(e: np.ndarray, rate1: np.ndarray, rate2: np.ndarray, change_point: float) -> np.ndarray:
    """Solve Lambda(T) = e for the cumulative hazard r1 min(t, cp) + r2 (t - cp)+."""
    first = rate1 * change_point
    return np.where(e <= first, e / rate1, change_point + (e - first) / rate2)


def two_piece_survival(t: np.ndarray, rate1: np.ndarray, rate2: np.ndarray, change_point: float) -> np.ndarray:
    return np.exp(-(rate1 * np.minimum(t, change_point) + rate2 * np.maximum(t - change_point, 0.0)))


def trial_event_times(
    case: Case, x: np.ndarray, treatment: np.ndarray, theta: float, rng: np.random.Generator
) -> np.ndarray:
    c = CONSTANTS
    if case == "VI":
        x1, x2 = x[:, 0], x[:, 1]
        log_t = (
            1.0
            - theta * treatment
            - c.beta1 * x1 * np.abs(x2)
            + c.beta2 * (x2 - x1) ** 2
            + c.trial_sigma * rng.standard_normal(x.shape[0])
        )
        return np.exp(log_t)
    if case == "VII":
        return _piecewise_times(x, treatment, theta, rng)
    return rng.exponential(1.0, size=x.shape[0]) / np.exp(cox_log_rate(x, treatment, theta))


def external_event_times(case: Case, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    c = CONSTANTS
    n = x.shape[0]
    x1, x2 = x[:, 0], x[:, 1]
    control = np.zeros(n)
    if case in ("I", "III", "VII"):
        rate = np.exp(cox_log_rate(x, control, 0.0))
    elif case == "II":
        rate = 0.05 * np.exp(c.intercept + 0.2 * x2)
    elif case == "IV":
        rate = np.full(n, c.h0 * np.exp(c.intercept))
    elif case == "V":
        # quadratic term read as (X2 - X1)^2, matching Case VI
        log_t = 1.0 + c.beta1 * x1 * x2 + c.beta2 * (x2 - x1) ** 2 + c.external_sigma * rng.standard_normal(n)
        return np.exp(log_t)
    elif case == "VI":
        log_t = 1.0 - c.beta1 * x1 * np.abs(x2) + c.beta2 * (x2 - x1) ** 2 + c.external_sigma * rng.standard_normal(n)
        return np.exp(log_t)
    else:
        raise ValidationError(f"Unknown simulation case: {case}")
    return rng.exponential(1.0, size=n) / rate


def _censor(event_times: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    censor = rng.exponential(1.0 / CONSTANTS.censor_rate, size=event_times.size)
    return np.minimum(event_times, censor), event_times <= censor


def draw_strata(x: np.ndarray, rng: np.random.Generator, stratify: Stratify, n_strata: int) -> np.ndarray | None:
    if stratify == "none":
        return None
    if stratify == "x1":
        return x[:, 0].astype(np.int64)
    if stratify == "independent":
        return rng.integers(0, n_strata, size=x.shape[0]).astype(np.int64)
    raise ValidationError(f"Unknown stratification rule: {stratify}")


def generate_trial(
    case: Case,
    theta: float,
    n: int,
    rng: np.random.Generator,
    *,
    pi: float = 0.5,
    stratify: Stratify = "none",
    n_strata: int = 2,
    tau_quantile: float | None = None,
) -> TrialDataset:
    """Draw one concurrent trial.

    Args:
        case: Data-generating case "I" .. "VII".
        theta: Conditional log-HR of treatment (0 under the null).
        n: Trial size.
        rng: Replicate stream.
        pi: Target allocation.
        stratify: "none" (Bernoulli randomization), "independent" (strata drawn
            independently of everything) or "x1" (strata equal X1); stratified
            trials use permuted blocks within strata.
        n_strata: Number of independent strata.
        tau_quantile: Analysis horizon as a quantile of observed times; the
            default uses the largest observed time.
    """
    case_index(case)
    x = draw_covariates(n, rng)
    strata = draw_strata(x, rng, stratify, n_strata)
    arm = assign_arms(n, pi, rng, strata)
    time, event = _censor(trial_event_times(case, x, arm, theta, rng), rng)
    tau = float(np.quantile(time, tau_quantile)) if tau_quantile is not None else None
    return TrialDataset.from_arrays(
        time, event, arm, x, feature_names=FEATURES, stratum=strata, tau=tau, pi=pi
    )


def generate_external(case: Case, n_ext: int, rng: np.random.Generator) -> ExternalControls:
    """Draw the historical control cohort of a case (Case III drops X2)."""
    case_index(case)
    x = draw_covariates(n_ext, rng)
    time, event = _censor(external_event_times(case, x, rng), rng)
    ext = ExternalControls.from_arrays(time, event, x, FEATURES)
    return ext.select(("x1", "x3")) if case == "III" else ext
