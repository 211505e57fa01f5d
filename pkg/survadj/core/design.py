"""Trial-planning calculator for covariate-adjusted log-rank analyses.

Adjusting for a prognostic score with correlation rho to the martingale
residual multiplies the score variance by roughly 1 - rho^2, so the events
needed for a given power shrink by the same factor. The stratified versions
use the pooled within-stratum correlation instead.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import norm

from survadj.core.errors import OutOfRange

# Guards ceil() against representation noise such as 0.7 * 400 = 279.99999999999997.
_ROUND_DIGITS = 9


def _ceil(value: float) -> int:
    return int(math.ceil(round(value, _ROUND_DIGITS)))


@dataclass(frozen=True)
class DesignInput:
    """Planning inputs; ``d_unadj`` is derived from the Schoenfeld formula when omitted."""

    rho: float
    d_unadj: int | None = None
    alpha: float = 0.05
    power: float = 0.8
    theta_alt: float | None = None
    pi: float = 0.5

    def validate(self) -> None:
        if not -1.0 <= self.rho <= 1.0:
            raise OutOfRange(f"rho must lie in [-1, 1], got {self.rho}")
        if not 0.0 < self.alpha < 1.0:
            raise OutOfRange(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.alpha < self.power < 1.0:
            raise OutOfRange(f"power must lie in (alpha, 1), got {self.power}")
        if not 0.0 < self.pi < 1.0:
            raise OutOfRange(f"pi must lie in (0, 1), got {self.pi}")
        if self.d_unadj is not None and self.d_unadj < 1:
            raise OutOfRange(f"d_unadj must be at least 1, got {self.d_unadj}")
        if self.d_unadj is None and not self.theta_alt:
            raise OutOfRange("Either d_unadj or a nonzero theta_alt is required")


@dataclass(frozen=True)
class DesignOutput:
    rho: float
    variance_ratio: float
    d_unadj: int
    d_adj: int
    events_saved: int
    power_at_fixed_events: float
    stratified: bool = False


def variance_ratio(rho: float) -> float:
    """Asymptotic adjusted/unadjusted variance ratio 1 - rho^2."""
    if not -1.0 <= rho <= 1.0 or math.isnan(rho):
        raise OutOfRange(f"rho must lie in [-1, 1], got {rho}")
    return 1.0 - rho**2


def schoenfeld_events(alpha: float, power: float, theta: float, pi: float = 0.5) -> int:
    """Events for a two-sided level-alpha log-rank test: (z_{a/2} + z_b)^2 / (pi(1-pi) theta^2)."""
    if theta == 0:
        raise OutOfRange("theta must be nonzero")
    z_a = norm.ppf(1.0 - alpha / 2.0)
    z_b = norm.ppf(power)
    return _ceil((z_a + z_b) ** 2 / (pi * (1.0 - pi) * theta**2))


def logrank_power(events: float, theta: float, alpha: float = 0.05, pi: float = 0.5, rho: float = 0.0) -> float:
    """Normal-approximation power of the (adjusted) log-rank test at a fixed event count."""
    ratio = variance_ratio(rho)
    z_a = norm.ppf(1.0 - alpha / 2.0)
    if ratio == 0.0:
        return 1.0
    drift = math.sqrt(events * pi * (1.0 - pi) * theta**2 / ratio)
    return float(norm.cdf(drift - z_a))


def implied_power(alpha: float, power: float, rho: float) -> float:
    """Power of the adjusted test at the events sized for the unadjusted test."""
    ratio = variance_ratio(rho)
    if ratio == 0.0:
        return 1.0
    z_a = norm.ppf(1.0 - alpha / 2.0)
    z_b = norm.ppf(power)
    return float(norm.cdf((z_a + z_b) / math.sqrt(ratio) - z_a))


def _events(inp: DesignInput, stratified: bool) -> DesignOutput:
    inp.validate()
    d_unadj = inp.d_unadj if inp.d_unadj is not None else schoenfeld_events(inp.alpha, inp.power, inp.theta_alt, inp.pi)
    ratio = variance_ratio(inp.rho)
    d_adj = min(d_unadj, _ceil(ratio * d_unadj))
    if inp.theta_alt:
        power = logrank_power(d_unadj, inp.theta_alt, inp.alpha, inp.pi, inp.rho)
    else:
        power = implied_power(inp.alpha, inp.power, inp.rho)
    return DesignOutput(
        rho=inp.rho,
        variance_ratio=ratio,
        d_unadj=int(d_unadj),
        d_adj=d_adj,
        events_saved=int(d_unadj) - d_adj,
        power_at_fixed_events=power,
        stratified=stratified,
    )


def events_required(inp: DesignInput) -> DesignOutput:
    """Adjusted event count ceil((1 - rho^2) d_unadj) and the events saved.

    Examples:
        >>> events_required(DesignInput(rho=0.679, d_unadj=400)).d_adj
        216
    """
    return _events(inp, stratified=False)


def events_required_stratified(inp: DesignInput) -> DesignOutput:
    """As :func:`events_required` with ``inp.rho`` read as the pooled within-stratum rho.

    The within-stratum correlation is in general no larger than the marginal
    one; the two coincide when the strata are independent of the score.
    """
    return _events(inp, stratified=True)


def power_curve(
    hazard_ratios: Sequence[float],
    events: float,
    alpha: float = 0.05,
    pi: float = 0.5,
    rho: float = 0.0,
) -> pd.DataFrame:
    """Analytic unadjusted and adjusted power over a hazard-ratio grid."""
    rows = []
    for hr in hazard_ratios:
        if hr <= 0:
            raise OutOfRange(f"hazard ratios must be positive, got {hr}")
        theta = float(np.log(hr))
        rows.append(
            {
                "hr": float(hr),
                "power_unadjusted": logrank_power(events, theta, alpha, pi) if theta else alpha,
                "power_adjusted": logrank_power(events, theta, alpha, pi, rho) if theta else alpha,
            }
        )
    return pd.DataFrame(rows, columns=["hr", "power_unadjusted", "power_adjusted"])
