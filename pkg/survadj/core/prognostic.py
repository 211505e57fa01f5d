"""Prognostic scores trained on external control data.

An external control cohort provides the training target (a martingale residual
under the cohort's own Nelson-Aalen hazard, or a survival-probability
transform of it). A regressor fitted on that target maps baseline covariates
to a scalar score, which then enters the trial analysis purely as a baseline
covariate. The built-in regressor is scikit-learn's regression random forest;
any estimator satisfying :class:`PrognosticRegressor` can be injected.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import joblib
import numpy as np
from numpy.typing import ArrayLike
from sklearn.base import clone
from sklearn.dummy import DummyRegressor
from sklearn.ensemble import RandomForestRegressor

from survadj.core.errors import (
    FeatureMismatch,
    InvalidTime,
    ModelFormatError,
    NoEvents,
    ValidationError,
)
from survadj.core.protocol import (
    Diagnostics,
    FloatArray,
    PrognosticRegressor,
    TargetKind,
    TrainingSummary,
    as_float_array,
)
from survadj.core.survival import TrialDataset, martingale_residuals, nelson_aalen, nelson_aalen_from_arrays

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = "1"
SMALL_EXTERNAL_COHORT = 20


@dataclass(frozen=True, eq=False)
class ExternalControls:
    """Historical control cohort: follow-up, event flags and named covariates."""

    time: FloatArray
    event: np.ndarray
    covariates: FloatArray
    feature_names: tuple[str, ...]
    tau: float
    diagnostics: tuple[str, ...] = ()

    @classmethod
    def from_arrays(
        cls,
        time: ArrayLike,
        event: ArrayLike,
        covariates: ArrayLike,
        feature_names: Sequence[str],
        tau: float | None = None,
    ) -> "ExternalControls":
        """Validate and mean-impute an external cohort.

        Missing covariate values (NaN) are replaced by the column mean; columns
        that are entirely missing are rejected.
        """
        time_arr = as_float_array(time)
        if not np.all(np.isfinite(time_arr)) or np.any(time_arr < 0):
            raise ValidationError("External follow-up times must be finite and nonnegative")
        event_arr = np.asarray(event).reshape(-1)
        if event_arr.shape != time_arr.shape or not np.all(np.isin(event_arr, (0, 1, True, False))):
            raise ValidationError("External event flags must be 0/1 and match the time column")
        x = np.asarray(covariates, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        names = tuple(feature_names)
        if x.shape != (time_arr.size, len(names)):
            raise ValidationError("External covariates do not match time rows and feature names")

        notes = Diagnostics()
        missing = np.isnan(x)
        if missing.any():
            empty = [names[k] for k in range(len(names)) if missing[:, k].all()]
            if empty:
                raise ValidationError(f"External covariates entirely missing: {', '.join(empty)}", {"columns": empty})
            x = np.where(missing, np.nanmean(x, axis=0), x)
            message = f"mean-imputed {int(missing.sum())} missing external covariate value(s)"
            logger.warning("[Prognostic] %s", message)
            notes.add(message)
        if time_arr.size < SMALL_EXTERNAL_COHORT:
            message = f"external cohort has only {time_arr.size} rows"
            logger.warning("[Prognostic] %s", message)
            notes.add(message)

        tau_value = float(time_arr.max()) if tau is None and time_arr.size else float(tau or 0.0)
        if time_arr.size and tau_value <= 0:
            raise InvalidTime(f"External horizon must be positive, got {tau_value}")
        return cls(
            time=time_arr,
            event=event_arr.astype(bool),
            covariates=np.ascontiguousarray(x),
            feature_names=names,
            tau=tau_value,
            diagnostics=tuple(notes.to_list()),
        )

    @property
    def n(self) -> int:
        return int(self.time.size)

    @property
    def n_events(self) -> int:
        return int((self.event & (self.time <= self.tau)).sum())

    def select(self, feature_names: Sequence[str]) -> "ExternalControls":
        """Restrict to a subset of features (e.g. when a covariate is unavailable externally)."""
        missing = [name for name in feature_names if name not in self.feature_names]
        if missing:
            raise FeatureMismatch(missing)
        index = [self.feature_names.index(name) for name in feature_names]
        return ExternalControls(
            time=self.time,
            event=self.event,
            covariates=self.covariates[:, index],
            feature_names=tuple(feature_names),
            tau=self.tau,
            diagnostics=self.diagnostics,
        )


@dataclass(frozen=True)
class ForestParams:
    """Hyper-parameters of the built-in regression forest.

    ``max_features=None`` means ceil(p / 3) candidate features per split.
    """

    n_estimators: int = 500
    max_depth: int | None = 5
    min_samples_leaf: int = 5
    max_features: int | None = None
    bootstrap: bool = True
    n_jobs: int | None = None

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "ForestParams":
        known = {k: v for k, v in values.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def build(self, n_features: int, seed: int) -> RandomForestRegressor:
        mtry = self.max_features or max(1, math.ceil(n_features / 3))
        return RandomForestRegressor(
            n_estimators=self.n_estimators,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            max_features=mtry,
            bootstrap=self.bootstrap,
            oob_score=self.bootstrap,
            n_jobs=self.n_jobs,
            random_state=seed,
        )


@dataclass(eq=False)
class PrognosticModel:
    """A fitted covariate -> score regressor and the metadata needed to reproduce it."""

    target_kind: TargetKind
    regressor: PrognosticRegressor
    feature_names: tuple[str, ...]
    training_summary: TrainingSummary
    hyperparams: dict[str, Any] = field(default_factory=dict)
    at_time: float | None = None
    model_id: str = ""

    def predict(self, x: ArrayLike) -> FloatArray:
        x_arr = np.asarray(x, dtype=np.float64)
        if x_arr.ndim == 1:
            x_arr = x_arr.reshape(1, -1)
        if x_arr.shape[1] != len(self.feature_names):
            expected, actual = len(self.feature_names), int(x_arr.shape[1])
            raise FeatureMismatch(
                list(self.feature_names[actual:]),
                f"Model expects {expected} feature columns, got {actual}",
                {"expected": expected, "actual": actual},
            )
        return as_float_array(self.regressor.predict(x_arr))

    def fingerprint(self) -> str:
        return joblib.hash(
            (self.target_kind, self.at_time, self.hyperparams, self.feature_names, self.regressor)
        )


@dataclass(frozen=True)
class RhoEstimate:
    """Correlation between prognostic scores and the trial's martingale residual proxy."""

    rho: float
    n_used: int
    rho_strat: float | None = None
    target_proxy: str = "TrialMartingale"
    zero_variance: bool = False

    @property
    def variance_ratio(self) -> float:
        return 1.0 - self.rho**2


def external_martingale_target(ext: ExternalControls) -> FloatArray:
    """Martingale residuals of the external cohort under its own pooled Nelson-Aalen hazard."""
    hazard = nelson_aalen(ext)
    if hazard.warning is not None:
        raise NoEvents("External cohort has no events before its horizon")
    return martingale_residuals(ext, hazard)


def default_survival_time(ext: ExternalControls) -> float:
    """Median external follow-up, the default evaluation time of the survival target."""
    return float(np.median(ext.time))


def external_survival_target(ext: ExternalControls, at_time: float | None = None) -> FloatArray:
    """exp(-Lambda(min(T_i, at_time))) under the external Nelson-Aalen hazard.

    Raises:
        InvalidTime: if ``at_time`` is outside (0, tau_ext].
    """
    at = default_survival_time(ext) if at_time is None else float(at_time)
    if not 0.0 < at <= ext.tau:
        raise InvalidTime(f"at_time must lie in (0, {ext.tau}], got {at}", {"at_time": at})
    hazard = nelson_aalen(ext)
    return np.exp(-np.asarray(hazard(np.minimum(ext.time, at)), dtype=np.float64))


def training_target(ext: ExternalControls, target_kind: TargetKind, at_time: float | None = None) -> FloatArray:
    if target_kind == "martingale":
        return external_martingale_target(ext)
    if target_kind == "survival":
        return external_survival_target(ext, at_time)
    raise ValidationError(f"Unknown target kind: {target_kind}")


def train(
    ext: ExternalControls,
    target_kind: TargetKind = "martingale",
    hyperparams: ForestParams | None = None,
    *,
    seed: int = 0,
    at_time: float | None = None,
    regressor: PrognosticRegressor | None = None,
) -> PrognosticModel:
    """Fit a prognostic model on the whole external cohort.

    Args:
        ext: External control cohort.
        target_kind: "martingale" (residual target) or "survival" (survival-probability target).
        hyperparams: Forest settings; ignored when ``regressor`` is given.
        seed: Random state of the built-in forest.
        at_time: Evaluation time of the survival target (default: median follow-up).
        regressor: Optional unfitted estimator to use instead of the forest.

    Returns:
        PrognosticModel whose ``model_id`` is a content hash of the fitted model.
    """
    params = hyperparams or ForestParams()
    if target_kind == "survival" and at_time is None:
        at_time = default_survival_time(ext)
    y = training_target(ext, target_kind, at_time)
    x = ext.covariates

    summary: TrainingSummary = {
        "n": ext.n,
        "events": ext.n_events,
        "target_mean": float(y.mean()),
        "target_std": float(y.std()),
        "constant": False,
    }
    if np.ptp(y) == 0.0 or x.shape[1] == 0:
        logger.warning("[Prognostic] training target or feature set is degenerate; using a constant model")
        fitted: PrognosticRegressor = DummyRegressor(strategy="mean").fit(np.zeros((ext.n, max(x.shape[1], 1))), y)
        summary["constant"] = True
    else:
        estimator = clone(regressor) if regressor is not None else params.build(x.shape[1], seed)
        fitted = estimator.fit(x, y)
        if hasattr(fitted, "n_jobs"):
            # tree averaging must be order-stable at prediction time
            fitted.set_params(n_jobs=1)
        oob = getattr(fitted, "oob_score_", None)
        if oob is not None:
            summary["oob_r2"] = float(oob)

    model = PrognosticModel(
        target_kind=target_kind,
        regressor=fitted,
        feature_names=ext.feature_names,
        training_summary=summary,
        hyperparams=asdict(params) | {"seed": seed} if regressor is None else {"regressor": type(regressor).__name__},
        at_time=at_time if target_kind == "survival" else None,
    )
    model.model_id = model.fingerprint()
    logger.info(
        "[Prognostic] trained %s model on %d rows (%d events), id=%s",
        target_kind,
        ext.n,
        ext.n_events,
        model.model_id,
    )
    return model


def score(model: PrognosticModel, data: TrialDataset) -> FloatArray:
    """Evaluate the prognostic score for each trial subject.

    Raises:
        FeatureMismatch: listing model features absent from the dataset.
    """
    missing = [name for name in model.feature_names if name not in data.feature_names]
    if missing:
        raise FeatureMismatch(missing)
    x = data.covariate_columns(model.feature_names)
    if model.training_summary.get("constant"):
        return as_float_array(model.regressor.predict(np.zeros((data.n, max(x.shape[1], 1)))))
    return model.predict(x)


def _pearson(a: FloatArray, b: FloatArray) -> float | None:
    a_c = a - a.mean()
    b_c = b - b.mean()
    denom = float(np.sqrt(np.sum(a_c**2) * np.sum(b_c**2)))
    if denom == 0.0:
        return None
    return float(np.clip(np.sum(a_c * b_c) / denom, -1.0, 1.0))


def _stratified_proxy(data: TrialDataset, scores: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Stratum-centered scores and stratum-specific Nelson-Aalen residuals, centered."""
    s_c = np.empty(data.n)
    r_c = np.empty(data.n)
    for z in np.unique(data.stratum):
        rows = np.flatnonzero(data.stratum == z)
        hazard = nelson_aalen_from_arrays(data.time[rows], data.event[rows], data.tau)
        observed = data.observed_event[rows].astype(np.float64)
        resid = observed - np.asarray(hazard(np.minimum(data.time[rows], data.tau)), dtype=np.float64)
        s_c[rows] = scores[rows] - scores[rows].mean()
        r_c[rows] = resid - resid.mean()
    return s_c, r_c


def estimate_rho(data: TrialDataset, scores: ArrayLike) -> RhoEstimate:
    """Correlation of the scores with the trial's pooled Nelson-Aalen martingale residuals.

    When strata are present the pooled within-stratum correlation is also
    reported. A constant score (or residual) gives ``rho = 0`` with
    ``zero_variance`` set instead of an error.
    """
    s = as_float_array(scores)
    if s.size != data.n:
        raise ValidationError("Score vector length does not match the dataset")
    if data.n < 3:
        raise ValidationError("At least 3 subjects are needed to estimate rho")
    residuals = martingale_residuals(data, nelson_aalen(data))
    rho = _pearson(s, residuals)
    zero_variance = rho is None
    if zero_variance:
        logger.warning("[Prognostic] score or residual has zero variance; rho set to 0")

    rho_strat = None
    if data.stratum is not None:
        s_c, r_c = _stratified_proxy(data, s)
        denom = float(np.sqrt(np.sum(s_c**2) * np.sum(r_c**2)))
        rho_strat = float(np.clip(np.sum(s_c * r_c) / denom, -1.0, 1.0)) if denom > 0 else 0.0
    return RhoEstimate(
        rho=0.0 if rho is None else rho,
        n_used=data.n,
        rho_strat=rho_strat,
        zero_variance=zero_variance,
    )


def save_model(model: PrognosticModel, path: str | Path) -> Path:
    """Write a versioned joblib container for the model."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    container = {
        "format_version": MODEL_FORMAT_VERSION,
        "target_kind": model.target_kind,
        "at_time": model.at_time,
        "hyperparams": model.hyperparams,
        "feature_names": list(model.feature_names),
        "training_summary": dict(model.training_summary),
        "model_id": model.model_id,
        "regressor": model.regressor,
    }
    joblib.dump(container, target)
    return target


def load_model(path: str | Path) -> PrognosticModel:
    """Read a model container and verify its content hash.

    Raises:
        ModelFormatError: for unreadable files, unknown versions or hash mismatches.
    """
    try:
        container = joblib.load(Path(path))
    except FileNotFoundError as exc:
        raise ValidationError(f"Model file not found: {path}") from exc
    except Exception as exc:
        raise ModelFormatError(f"Cannot read model file {path}: {exc}") from exc
    required = {"format_version", "target_kind", "feature_names", "model_id", "regressor"}
    if not isinstance(container, dict) or not required <= container.keys():
        raise ModelFormatError(f"{path} is not a survadj model container")
    if container["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"Unsupported model format version {container['format_version']!r}")
    model = PrognosticModel(
        target_kind=container["target_kind"],
        regressor=container["regressor"],
        feature_names=tuple(container["feature_names"]),
        training_summary=container.get("training_summary", {}),
        hyperparams=container.get("hyperparams", {}),
        at_time=container.get("at_time"),
        model_id=container["model_id"],
    )
    if model.fingerprint() != model.model_id:
        raise ModelFormatError("Model content does not match its recorded model_id")
    return model
