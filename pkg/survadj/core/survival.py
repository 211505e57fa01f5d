"""Counting-process primitives for two-arm time-to-event data.

Holds the validated dataset types, step functions (Nelson-Aalen hazards and
sample-average risk curves), the unadjusted Cox score with treatment as the
sole covariate, its observed information, the partial likelihood root and
martingale residuals.

Conventions used throughout:
    - A subject is at risk at t when its follow-up time is >= t, so subjects
      censored at an event time still count in that event's risk set.
    - Tied event times are pooled into a single jump d/Y.
    - Events exactly at the horizon tau are included; nothing after tau counts.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from survadj.core.errors import (
    DegenerateInformation,
    EmptyRiskSet,
    InvalidTime,
    NoEvents,
    NoRootInBracket,
    OutOfRange,
    ValidationError,
)
from survadj.core.protocol import CensoredSample, FloatArray, as_float_array

logger = logging.getLogger(__name__)

THETA_MAX = 20.0
ROOT_XTOL = 1e-10


@dataclass(frozen=True)
class Subject:
    """One observed trial record."""

    time: float
    event: bool
    arm: int
    stratum: int | None = None
    covariates: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Validated two-arm trial data in column form.

    Use :meth:`from_arrays` or :meth:`from_subjects` rather than the raw
    constructor; they run validation and fill the defaults for ``tau``
    (largest follow-up time) and ``pi`` (observed treated fraction).
    """

    time: FloatArray
    event: NDArray[np.bool_]
    arm: NDArray[np.int64]
    covariates: FloatArray
    feature_names: tuple[str, ...]
    tau: float
    pi: float
    stratum: NDArray[np.int64] | None = None

    @classmethod
    def from_arrays(
        cls,
        time: ArrayLike,
        event: ArrayLike,
        arm: ArrayLike,
        covariates: ArrayLike | None = None,
        *,
        feature_names: Sequence[str] | None = None,
        stratum: ArrayLike | None = None,
        tau: float | None = None,
        pi: float | None = None,
    ) -> "TrialDataset":
        time_arr = as_float_array(time)
        n = time_arr.shape[0]
        if n == 0:
            raise ValidationError("Dataset has no subjects")
        if not np.all(np.isfinite(time_arr)) or np.any(time_arr < 0):
            raise ValidationError("Follow-up times must be finite and nonnegative")

        event_raw = np.asarray(event).reshape(-1)
        if event_raw.shape[0] != n:
            raise ValidationError("event length does not match time length")
        if not np.all(np.isin(event_raw, (0, 1, True, False))):
            raise ValidationError("event must be 0/1")
        event_arr = event_raw.astype(bool)

        arm_raw = np.asarray(arm).reshape(-1)
        if arm_raw.shape[0] != n:
            raise ValidationError("arm length does not match time length")
        if not np.all(np.isin(arm_raw, (0, 1))):
            raise ValidationError("arm must be 0 (control) or 1 (treatment)")
        arm_arr = arm_raw.astype(np.int64)
        if arm_arr.sum() == 0 or arm_arr.sum() == n:
            raise ValidationError("Each arm needs at least one subject")

        if covariates is None:
            cov = np.zeros((n, 0), dtype=np.float64)
        else:
            cov = np.asarray(covariates, dtype=np.float64)
            if cov.ndim == 1:
                cov = cov.reshape(-1, 1)
            if cov.shape[0] != n:
                raise ValidationError("covariate rows do not match time length")
            if not np.all(np.isfinite(cov)):
                raise ValidationError("Covariates must be finite (impute missing values first)")
        names = tuple(feature_names) if feature_names is not None else tuple(f"x{k + 1}" for k in range(cov.shape[1]))
        if len(names) != cov.shape[1]:
            raise ValidationError("feature_names length does not match covariate columns")
        if len(set(names)) != len(names):
            raise ValidationError("feature_names must be unique")

        stratum_arr = None
        if stratum is not None:
            stratum_raw = np.asarray(stratum).reshape(-1)
            if stratum_raw.shape[0] != n:
                raise ValidationError("stratum length does not match time length")
            stratum_arr = stratum_raw.astype(np.int64)

        tau_value = float(time_arr.max()) if tau is None else float(tau)
        if not np.isfinite(tau_value) or tau_value <= 0:
            raise InvalidTime(f"Analysis horizon must be positive, got {tau_value}")

        pi_value = float(arm_arr.mean()) if pi is None else float(pi)
        if not 0.0 < pi_value < 1.0:
            raise OutOfRange(f"Allocation pi must lie in (0, 1), got {pi_value}")

        return cls(
            time=np.ascontiguousarray(time_arr),
            event=event_arr,
            arm=arm_arr,
            covariates=np.ascontiguousarray(cov),
            feature_names=names,
            tau=tau_value,
            pi=pi_value,
            stratum=stratum_arr,
        )

    @classmethod
    def from_subjects(
        cls,
        subjects: Sequence[Subject],
        *,
        tau: float | None = None,
        pi: float | None = None,
        feature_names: Sequence[str] | None = None,
    ) -> "TrialDataset":
        if not subjects:
            raise ValidationError("Dataset has no subjects")
        widths = {len(s.covariates) for s in subjects}
        if len(widths) != 1:
            raise ValidationError("Covariate vectors must have identical length across subjects")
        has_stratum = {s.stratum is not None for s in subjects}
        if len(has_stratum) != 1:
            raise ValidationError("Stratum must be present for all subjects or for none")
        p = widths.pop()
        return cls.from_arrays(
            [s.time for s in subjects],
            [s.event for s in subjects],
            [s.arm for s in subjects],
            np.array([s.covariates for s in subjects], dtype=np.float64).reshape(len(subjects), p),
            feature_names=feature_names,
            stratum=[s.stratum for s in subjects] if has_stratum.pop() else None,
            tau=tau,
            pi=pi,
        )

    @property
    def n(self) -> int:
        return int(self.time.shape[0])

    @property
    def p(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def n_treated(self) -> int:
        return int(self.arm.sum())

    @property
    def pi_hat(self) -> float:
        """Observed treated fraction n1/n, used in every variance formula."""
        return self.n_treated / self.n

    @property
    def observed_event(self) -> NDArray[np.bool_]:
        """Event indicator restricted to the analysis window [0, tau]."""
        return self.event & (self.time <= self.tau)

    @property
    def n_events(self) -> int:
        return int(self.observed_event.sum())

    @property
    def subjects(self) -> list[Subject]:
        return [
            Subject(
                time=float(self.time[i]),
                event=bool(self.event[i]),
                arm=int(self.arm[i]),
                stratum=None if self.stratum is None else int(self.stratum[i]),
                covariates=tuple(float(v) for v in self.covariates[i]),
            )
            for i in range(self.n)
        ]

    def covariate_columns(self, names: Sequence[str]) -> FloatArray:
        """Return the named covariate columns in the requested order."""
        missing = [name for name in names if name not in self.feature_names]
        if missing:
            raise ValidationError(f"Unknown covariate columns: {', '.join(missing)}", {"missing": missing})
        index = [self.feature_names.index(name) for name in names]
        return self.covariates[:, index]

    def with_covariates(self, columns: ArrayLike, names: Sequence[str]) -> "TrialDataset":
        """Return a copy with extra covariate columns appended (e.g. a prognostic score)."""
        extra = np.asarray(columns, dtype=np.float64)
        if extra.ndim == 1:
            extra = extra.reshape(-1, 1)
        if extra.shape != (self.n, len(names)):
            raise ValidationError("Appended covariate block has the wrong shape")
        clash = [name for name in names if name in self.feature_names]
        if clash:
            raise ValidationError(f"Covariate names already present: {', '.join(clash)}")
        if not np.all(np.isfinite(extra)):
            raise ValidationError("Appended covariates must be finite")
        return replace(
            self,
            covariates=np.ascontiguousarray(np.hstack([self.covariates, extra])),
            feature_names=self.feature_names + tuple(names),
        )


@dataclass(frozen=True, eq=False)
class StepHazard:
    """Step function given by jump times and increments.

    Right-continuous by default (value at t sums increments at jump times <= t).
    Risk-set curves set ``left_continuous`` so that evaluation at a jump time
    returns the value just before the jump.
    """

    jump_times: FloatArray
    increments: FloatArray
    initial: float = 0.0
    left_continuous: bool = False
    warning: str | None = None
    _cumulative: FloatArray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        jumps = as_float_array(self.jump_times)
        incs = as_float_array(self.increments)
        if jumps.shape != incs.shape:
            raise ValidationError("jump_times and increments must have the same length")
        if jumps.size > 1 and np.any(np.diff(jumps) <= 0):
            raise ValidationError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", jumps)
        object.__setattr__(self, "increments", incs)
        object.__setattr__(self, "_cumulative", np.concatenate([[0.0], np.cumsum(incs)]))

    def __call__(self, t: ArrayLike) -> FloatArray | float:
        t_arr = np.asarray(t, dtype=np.float64)
        side = "left" if self.left_continuous else "right"
        values = self.initial + self._cumulative[np.searchsorted(self.jump_times, t_arr, side=side)]
        return float(values) if values.ndim == 0 else values

    @property
    def is_zero(self) -> bool:
        return self.initial == 0.0 and not np.any(self.increments)


class RiskCurves(NamedTuple):
    """Sample-average at-risk curves per arm and the pooled counting curve."""

    y1: StepHazard
    y0: StepHazard
    n_bar: StepHazard

    def y_total(self, t: ArrayLike) -> FloatArray | float:
        return self.y1(t) + self.y0(t)


@dataclass(frozen=True)
class ScoreEvaluation:
    value: float
    neg_derivative: float


@dataclass(frozen=True, eq=False)
class EventTable:
    """Distinct event times in [0, tau] with per-arm event and at-risk counts.

    ``members`` are the dataset row indices the table was built from (all rows
    for a pooled table, one stratum's rows for a stratified one).
    """

    times: FloatArray
    d1: FloatArray
    d0: FloatArray
    y1: FloatArray
    y0: FloatArray
    members: NDArray[np.int64]

    @property
    def d(self) -> FloatArray:
        return self.d1 + self.d0

    @property
    def n_events(self) -> int:
        return int(self.d.sum())

    def score_terms(self, theta: float) -> tuple[float, float]:
        """Unnormalized score and information contributions at theta."""
        if self.times.size == 0:
            return 0.0, 0.0
        e = np.exp(theta)
        denom = e * self.y1 + self.y0
        value = np.sum((self.d1 * self.y0 - self.d0 * e * self.y1) / denom)
        info = np.sum(self.d * e * self.y1 * self.y0 / denom**2)
        return float(value), float(info)


def _at_risk_counts(sorted_times: FloatArray, at: FloatArray) -> FloatArray:
    """Number of entries of ``sorted_times`` that are >= each value in ``at``."""
    return (sorted_times.size - np.searchsorted(sorted_times, at, side="left")).astype(np.float64)


def build_event_table(data: TrialDataset, members: NDArray[np.int64] | None = None) -> EventTable:
    """Tabulate event times <= tau for the given rows (all rows by default)."""
    rows = np.arange(data.n) if members is None else np.asarray(members, dtype=np.int64)
    time = data.time[rows]
    arm = data.arm[rows]
    observed = data.observed_event[rows]
    times = np.unique(time[observed])
    t1 = np.sort(time[arm == 1])
    t0 = np.sort(time[arm == 0])
    ev1 = np.sort(time[observed & (arm == 1)])
    ev0 = np.sort(time[observed & (arm == 0)])
    d1 = (np.searchsorted(ev1, times, side="right") - np.searchsorted(ev1, times, side="left")).astype(np.float64)
    d0 = (np.searchsorted(ev0, times, side="right") - np.searchsorted(ev0, times, side="left")).astype(np.float64)
    return EventTable(
        times=times,
        d1=d1,
        d0=d0,
        y1=_at_risk_counts(t1, times),
        y0=_at_risk_counts(t0, times),
        members=rows,
    )


def nelson_aalen_from_arrays(time: ArrayLike, event: ArrayLike, tau: float) -> StepHazard:
    """Pooled Nelson-Aalen cumulative hazard for raw follow-up arrays."""
    time_arr = as_float_array(time)
    if time_arr.size == 0:
        raise EmptyRiskSet("Cannot estimate a hazard without subjects")
    observed = np.asarray(event, dtype=bool).reshape(-1) & (time_arr <= tau)
    jump_times, d = np.unique(time_arr[observed], return_counts=True)
    if jump_times.size == 0:
        logger.warning("[Survival] no events on [0, %s]; returning the zero hazard", tau)
        return StepHazard(np.empty(0), np.empty(0), warning="no events before tau")
    at_risk = _at_risk_counts(np.sort(time_arr), jump_times)
    return StepHazard(jump_times, d / at_risk)


def nelson_aalen(data: CensoredSample, arm: int | None = None) -> StepHazard:
    """Nelson-Aalen estimate of the cumulative hazard.

    Args:
        data: Trial dataset or external cohort.
        arm: ``None`` for the pooled sample, otherwise 0 or 1 to restrict to an arm.

    Returns:
        StepHazard with one jump per distinct event time <= tau. When there are
        no events the zero hazard is returned with ``warning`` set.
    """
    time, event = data.time, data.event
    if arm is not None:
        arms = getattr(data, "arm", None)
        if arms is None:
            raise ValidationError("Arm-specific hazard requested for data without arms")
        mask = arms == arm
        if not mask.any():
            raise EmptyRiskSet(f"Arm {arm} has no subjects")
        time, event = time[mask], event[mask]
    return nelson_aalen_from_arrays(time, event, data.tau)


def risk_curves(data: TrialDataset) -> RiskCurves:
    """Sample-average risk curves Y1(t), Y0(t) (left-continuous) and N(t) (right-continuous)."""
    n = float(data.n)
    curves = []
    for j in (1, 0):
        times, counts = np.unique(data.time[data.arm == j], return_counts=True)
        curves.append(
            StepHazard(times, -counts / n, initial=float((data.arm == j).sum()) / n, left_continuous=True)
        )
    ev_times, ev_counts = np.unique(data.time[data.observed_event], return_counts=True)
    return RiskCurves(y1=curves[0], y0=curves[1], n_bar=StepHazard(ev_times, ev_counts / n))


def score_from_tables(tables: Sequence[EventTable], n: int, theta: float) -> ScoreEvaluation:
    """Sum Cox score contributions over event tables (one per stratum)."""
    value = 0.0
    info = 0.0
    for table in tables:
        v, i = table.score_terms(theta)
        value += v
        info += i
    return ScoreEvaluation(value=value / n, neg_derivative=info / n)


def check_scoreable(tables: Sequence[EventTable], n: int) -> None:
    """Raise NoEvents or DegenerateInformation when no score root can exist."""
    if sum(table.n_events for table in tables) == 0:
        raise NoEvents("No events on [0, tau]; the score is identically zero")
    if score_from_tables(tables, n, 0.0).neg_derivative <= 0.0:
        raise DegenerateInformation("Observed information is zero: one arm is never at risk at an event time")


def cox_score(data: TrialDataset, theta: float) -> ScoreEvaluation:
    """Unadjusted Cox partial likelihood score (treatment only) and observed information.

    Args:
        data: Validated trial dataset.
        theta: Log hazard ratio at which to evaluate.

    Returns:
        ScoreEvaluation with the normalized score and minus its derivative.
    """
    table = build_event_table(data)
    if table.n_events == 0:
        raise NoEvents("No events on [0, tau]; the score is identically zero")
    result = score_from_tables([table], data.n, theta)
    if result.neg_derivative <= 0.0:
        raise DegenerateInformation("Observed information is zero: one arm is never at risk at an event time")
    return result


def solve_score(func: Callable[[float], float], theta_max: float = THETA_MAX) -> float:
    """Root of a nonincreasing score on [-theta_max, theta_max].

    Uses scipy's Brent method (inverse quadratic / secant steps safeguarded by
    bisection); the result does not depend on a starting point.
    """
    lo, hi = -theta_max, theta_max
    f_lo, f_hi = func(lo), func(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoRootInBracket(
            f"Score does not change sign on [{lo}, {hi}] (f(lo)={f_lo:.3g}, f(hi)={f_hi:.3g}); "
            "events are likely confined to one arm",
            {"f_lo": f_lo, "f_hi": f_hi},
        )
    return float(brentq(func, lo, hi, xtol=ROOT_XTOL))


def cox_mple(data: TrialDataset, theta_max: float = THETA_MAX) -> float:
    """Maximum partial likelihood estimate of the log hazard ratio."""
    table = build_event_table(data)
    check_scoreable([table], data.n)
    return solve_score(lambda theta: score_from_tables([table], data.n, theta).value, theta_max)


def martingale_residuals(data: CensoredSample, hazard: StepHazard) -> FloatArray:
    """Martingale residuals Delta_i 1(T_i <= tau) - hazard(min(T_i, tau))."""
    time = data.time
    observed = data.event & (time <= data.tau)
    return observed.astype(np.float64) - np.asarray(hazard(np.minimum(time, data.tau)), dtype=np.float64)
