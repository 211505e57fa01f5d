from pathlib import Path

import numpy as np
import pandas as pd

from survadj.core.survival import TrialDataset

###########################
# Dataset builders
###########################


def four_subject_trial() -> TrialDataset:
    """arm 1: event at 1, censored at 4; arm 0: event at 2, censored at 3."""
    return TrialDataset.from_arrays([1.0, 4.0, 2.0, 3.0], [1, 0, 1, 0], [1, 1, 0, 0])


def symmetric_trial() -> TrialDataset:
    """Both arms share the same event pattern, so the score vanishes at 0."""
    times = [1.0, 2.0, 3.0, 4.0]
    events = [1, 0, 1, 1]
    return TrialDataset.from_arrays(times + times, events + events, [1] * 4 + [0] * 4)


def random_trial(
    n: int,
    seed: int,
    p: int = 2,
    theta: float = 0.0,
    n_strata: int | None = None,
    censor_rate: float = 0.3,
) -> TrialDataset:
    """Exponential trial whose hazard depends on the first covariate."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    arm = np.zeros(n, dtype=np.int64)
    arm[rng.permutation(n)[: n // 2]] = 1
    log_rate = theta * arm + (0.8 * x[:, 0] if p else 0.0)
    event_time = rng.exponential(1.0, n) / np.exp(log_rate)
    censor = rng.exponential(1.0 / censor_rate, n)
    stratum = rng.integers(0, n_strata, n) if n_strata else None
    return TrialDataset.from_arrays(
        np.minimum(event_time, censor),
        (event_time <= censor).astype(int),
        arm,
        x,
        stratum=stratum,
    )


def tiny_random_trial(seed: int) -> TrialDataset:
    """n <= 12 with tied times and a binary covariate, for oracle comparisons."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 13))
    arm = np.zeros(n, dtype=np.int64)
    arm[rng.permutation(n)[: n // 2]] = 1
    time = rng.integers(1, 6, n).astype(float)
    event = rng.binomial(1, 0.7, n)
    x = np.column_stack([rng.standard_normal(n), rng.binomial(1, 0.5, n)])
    return TrialDataset.from_arrays(time, event, arm, x)


###########################
# Direct-summation oracles
###########################


def oracle_score(data: TrialDataset, theta: float) -> tuple[float, float]:
    """Score and information by looping over distinct event times."""
    e = np.exp(theta)
    value = 0.0
    info = 0.0
    observed = data.event & (data.time <= data.tau)
    groups = np.zeros(data.n, dtype=int) if data.stratum is None else data.stratum
    for z in np.unique(groups):
        in_group = groups == z
        for t in np.unique(data.time[observed & in_group]):
            at_risk = in_group & (data.time >= t)
            y1 = np.sum(at_risk & (data.arm == 1))
            y0 = np.sum(at_risk & (data.arm == 0))
            d1 = np.sum(in_group & observed & (data.time == t) & (data.arm == 1))
            d0 = np.sum(in_group & observed & (data.time == t) & (data.arm == 0))
            denom = e * y1 + y0
            value += (d1 * y0 - d0 * e * y1) / denom
            info += (d1 + d0) * e * y1 * y0 / denom**2
    return value / data.n, info / data.n


def oracle_pseudo_outcomes(data: TrialDataset, theta: float) -> np.ndarray:
    """Pseudo-outcomes straight from their integral definition."""
    e = np.exp(theta)
    observed = data.event & (data.time <= data.tau)
    groups = np.zeros(data.n, dtype=int) if data.stratum is None else data.stratum
    values = np.zeros(data.n)
    for i in range(data.n):
        in_group = groups == groups[i]
        total = 0.0
        for t in np.unique(data.time[observed & in_group]):
            at_risk = in_group & (data.time >= t)
            y1 = np.sum(at_risk & (data.arm == 1))
            y0 = np.sum(at_risk & (data.arm == 0))
            d = np.sum(in_group & observed & (data.time == t))
            denom = e * y1 + y0
            weight = y0 / denom if data.arm[i] == 1 else e * y1 / denom
            own = 1.0 if observed[i] and data.time[i] == t else 0.0
            scale = e if data.arm[i] == 1 else 1.0
            total += weight * (own - (data.time[i] >= t) * scale * d / denom)
        values[i] = total
    return values


def bisection_root(func, lo: float = -20.0, hi: float = 20.0, tol: float = 1e-12) -> float:
    """Root of a nonincreasing function by plain bisection."""
    f_lo = func(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def oracle_score_curve(data: TrialDataset, thetas: np.ndarray) -> np.ndarray:
    """Unstratified score over a whole grid of theta values at once."""
    e = np.exp(np.asarray(thetas, dtype=float))
    observed = data.event & (data.time <= data.tau)
    total = np.zeros_like(e)
    for t in np.unique(data.time[observed]):
        at_risk = data.time >= t
        y1 = np.sum(at_risk & (data.arm == 1))
        y0 = np.sum(at_risk & (data.arm == 0))
        d1 = np.sum(observed & (data.time == t) & (data.arm == 1))
        d0 = np.sum(observed & (data.time == t) & (data.arm == 0))
        total += (d1 * y0 - d0 * e * y1) / (e * y1 + y0)
    return total / data.n


def grid_root(data: TrialDataset, lo: float = -5.0, hi: float = 5.0) -> float:
    """Coarse-to-fine grid search for the zero of the unadjusted score."""
    grid = np.arange(lo, hi + 1e-3, 1e-3)
    best = grid[np.argmin(np.abs(oracle_score_curve(data, grid)))]
    fine = np.arange(best - 2e-3, best + 2e-3, 1e-5)
    return float(fine[np.argmin(np.abs(oracle_score_curve(data, fine)))])


###########################
# CSV fixtures
###########################


def write_trial_csv(path: Path, data: TrialDataset) -> Path:
    frame = pd.DataFrame({"time": data.time, "event": data.event.astype(int), "arm": data.arm})
    if data.stratum is not None:
        frame["stratum"] = data.stratum
    for k, name in enumerate(data.feature_names):
        frame[name] = data.covariates[:, k]
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def write_external_csv(path: Path, n: int = 120, seed: int = 0) -> Path:
    """External controls whose hazard rises with x1, like :func:`random_trial`."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    event_time = rng.exponential(1.0, n) / np.exp(0.8 * x[:, 0])
    censor = rng.exponential(1.0 / 0.3, n)
    frame = pd.DataFrame(
        {
            "time": np.minimum(event_time, censor),
            "event": (event_time <= censor).astype(int),
            "x1": x[:, 0],
            "x2": x[:, 1],
        }
    )
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
