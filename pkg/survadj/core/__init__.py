"""Core survival analysis library."""

from .adjustment import adjusted_logrank_test, fit_adjusted_hr, fit_unadjusted_hr, logrank_test, pseudo_outcomes
from .design import DesignInput, DesignOutput, events_required, events_required_stratified, power_curve
from .errors import SurvAdjError
from .prognostic import ExternalControls, ForestParams, PrognosticModel, estimate_rho, load_model, save_model, score, train
from .simulation import ScenarioConfig, run_scenario, simulate_power_curve
from .stratified import fit_stratified_hr, stratified_logrank_test
from .survival import TrialDataset, cox_mple, cox_score, nelson_aalen, risk_curves

__all__ = [
    "DesignInput",
    "DesignOutput",
    "ExternalControls",
    "ForestParams",
    "PrognosticModel",
    "ScenarioConfig",
    "SurvAdjError",
    "TrialDataset",
    "adjusted_logrank_test",
    "cox_mple",
    "cox_score",
    "estimate_rho",
    "events_required",
    "events_required_stratified",
    "fit_adjusted_hr",
    "fit_stratified_hr",
    "fit_unadjusted_hr",
    "load_model",
    "logrank_test",
    "nelson_aalen",
    "power_curve",
    "pseudo_outcomes",
    "risk_curves",
    "run_scenario",
    "save_model",
    "score",
    "simulate_power_curve",
    "stratified_logrank_test",
    "train",
]
