"""Protocol definitions for pluggable pieces of the analysis pipeline.

This module defines the small structural interfaces the library relies on:
any censored sample that Nelson-Aalen style estimators can consume, and any
regressor that can serve as a prognostic model. Built-in implementations live
in ``survival.py`` and ``prognostic.py``; callers can plug in their own objects
as long as they satisfy these protocols.
"""

from dataclasses import dataclass, field
from typing import Any, Literal, Protocol, TypeAlias, TypedDict, runtime_checkable

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray: TypeAlias = NDArray[np.float64]
TargetKind: TypeAlias = Literal["martingale", "survival"]
Alternative: TypeAlias = Literal["two-sided", "less", "greater"]
Method: TypeAlias = Literal[
    "Unadjusted",
    "CovariateAdjusted",
    "StratifiedUnadjusted",
    "StratifiedCovariateAdjusted",
]


@runtime_checkable
class CensoredSample(Protocol):
    """Anything carrying right-censored follow-up data truncated at a horizon."""

    @property
    def time(self) -> FloatArray: ...

    @property
    def event(self) -> NDArray[np.bool_]: ...

    @property
    def tau(self) -> float: ...


@runtime_checkable
class PrognosticRegressor(Protocol):
    """Minimal contract for a covariate -> score regressor.

    Matches the scikit-learn estimator API, so any sklearn regressor can be
    injected. ``fit`` must return the fitted estimator.
    """

    def fit(self, X: ArrayLike, y: ArrayLike) -> "PrognosticRegressor": ...

    def predict(self, X: ArrayLike) -> FloatArray: ...


class TrainingSummary(TypedDict, total=False):
    """Summary recorded with a trained prognostic model.

    Only "n" and "events" are guaranteed. "oob_r2" is present when the
    regressor reports an out-of-bag score.
    """

    n: int
    events: int
    target_mean: float
    target_std: float
    oob_r2: float
    constant: bool


@dataclass
class Diagnostics:
    """Accumulates human-readable warnings attached to a result object."""

    messages: list[str] = field(default_factory=list)

    def add(self, message: str) -> None:
        if message not in self.messages:
            self.messages.append(message)

    def extend(self, other: "Diagnostics | list[str]") -> None:
        for message in other.messages if isinstance(other, Diagnostics) else other:
            self.add(message)

    def to_list(self) -> list[str]:
        return list(self.messages)

    def __bool__(self) -> bool:
        return bool(self.messages)


def as_float_array(values: Any) -> FloatArray:
    """Convert to a contiguous 1-D float64 array."""
    return np.ascontiguousarray(np.asarray(values, dtype=np.float64).reshape(-1))
