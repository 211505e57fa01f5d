"""Command-line entry point: ``survadj <command> [options]``."""

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from survadj.config import get_forest_params, get_section, load_json_file, reset_defaults_cache, setup_logging
from survadj.core.adjustment import adjusted_logrank_test, fit_adjusted_hr
from survadj.core.design import DesignInput, events_required, events_required_stratified, power_curve
from survadj.core.errors import SurvAdjError, ValidationError
from survadj.core.generators import CASES, EFFECTS
from survadj.core.prognostic import estimate_rho, load_model, save_model, score, train
from survadj.core.simulation import STRATEGIES, ScenarioConfig, run_scenario, simulate_power_curve
from survadj.core.stratified import fit_stratified_hr, stratified_logrank_test, stratum_summary
from survadj.core.survival import TrialDataset
from survadj.tools.csv_io import load_external, load_scores, load_trial, write_scores
from survadj.tools.json_validator import validate_report
from survadj.tools.reports import (
    REPORT_MODELS,
    DesignReport,
    ErrorReport,
    FitReport,
    ScoreReport,
    SimulateReport,
    TestReport,
    TrainReport,
    render_table,
)
from survadj.utils.manifest import RunManifest, hash_inputs, save_manifest, utc_now

logger = logging.getLogger(__name__)

SCORE_NAME = "score"
ADJUST_CHOICES = ("score", "covariates", "both", "none")


def _csv_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _float_list(value: str) -> list[float]:
    try:
        return [float(item) for item in _csv_list(value)]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from e


def _int_list(value: str) -> list[int]:
    try:
        return [int(item) for item in _csv_list(value)]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from e


# ---------------------------------------------------------------------------
# Trial analysis (fit / test)
# ---------------------------------------------------------------------------


def _prepare_trial(args: argparse.Namespace) -> tuple[TrialDataset, list[str], float | None, str | None]:
    """Load the trial, attach the prognostic score and resolve the adjustment set."""
    selected = _csv_list(args.covariates) if args.covariates else None
    model = load_model(args.model) if args.model else None
    to_load = selected
    if selected is not None and model is not None:
        to_load = list(dict.fromkeys([*selected, *model.feature_names]))
    data = load_trial(args.data, tau=args.tau, pi=args.pi, covariates=to_load)
    covariates = list(selected) if selected is not None else list(data.feature_names)

    scores = None
    if args.score:
        scores = load_scores(args.score, n=data.n)
    elif model is not None:
        scores = score(model, data)

    adjust = args.adjust or ("score" if scores is not None else "covariates")
    if adjust in ("score", "both") and scores is None:
        raise ValidationError(f"--adjust {adjust} needs --score or --model")

    rho = None
    if scores is not None:
        rho = estimate_rho(data, scores).rho
        data = data.with_covariates(scores, [SCORE_NAME])

    columns = {
        "score": [SCORE_NAME],
        "covariates": covariates,
        "both": [SCORE_NAME, *covariates],
        "none": [],
    }[adjust]
    return data, columns, rho, model.model_id if model is not None else None


def _use_strata(args: argparse.Namespace, data: TrialDataset) -> bool:
    if args.stratified and data.stratum is None:
        raise ValidationError("--stratified needs a 'stratum' column in the trial file")
    return bool(args.stratified)


def cmd_fit(args: argparse.Namespace) -> tuple[BaseModel, RunManifest]:
    data, columns, rho, model_id = _prepare_trial(args)
    alpha = args.alpha if args.alpha is not None else get_section("analysis")["alpha"]
    if _use_strata(args, data):
        fit = fit_stratified_hr(data, columns, alpha=alpha, strict=args.strict)
        report = FitReport.from_fit(fit, rho=rho, strata=stratum_summary(data))
    else:
        fit = fit_adjusted_hr(data, columns, alpha=alpha, strict=args.strict)
        report = FitReport.from_fit(fit, rho=rho)
    return report, _manifest(args, model_id=model_id)


def cmd_test(args: argparse.Namespace) -> tuple[BaseModel, RunManifest]:
    data, columns, _, model_id = _prepare_trial(args)
    alternative = args.alternative or get_section("analysis")["alternative"]
    if _use_strata(args, data):
        test = stratified_logrank_test(data, columns, alternative=alternative, strict=args.strict)
        report = TestReport.from_test(test, strata=stratum_summary(data))
    else:
        test = adjusted_logrank_test(data, columns, alternative=alternative, strict=args.strict)
        report = TestReport.from_test(test)
    return report, _manifest(args, model_id=model_id)


# ---------------------------------------------------------------------------
# Prognostic model (train / score)
# ---------------------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> tuple[BaseModel, RunManifest]:
    features = _csv_list(args.features) if args.features else None
    ext = load_external(args.external, feature_names=features, tau=args.tau)
    params = get_forest_params(
        {
            "n_estimators": args.n_estimators,
            "max_depth": args.max_depth,
            "min_samples_leaf": args.min_samples_leaf,
            "max_features": args.max_features,
        }
    )
    model = train(ext, args.target, params, seed=args.seed, at_time=args.at_time)
    path = save_model(model, args.model_out)
    report = TrainReport.from_model(model, str(path), list(ext.diagnostics))
    return report, _manifest(args, model_id=model.model_id, seed=args.seed)


def cmd_score(args: argparse.Namespace) -> tuple[BaseModel, RunManifest]:
    model = load_model(args.model)
    data = load_trial(args.data, tau=args.tau, covariates=list(model.feature_names))
    values = score(model, data)
    estimate = estimate_rho(data, values)
    scores_path = str(write_scores(args.scores_out, values, SCORE_NAME)) if args.scores_out else None
    report = ScoreReport.from_estimate(
        model.model_id, float(values.mean()), float(values.std()), estimate, scores_path
    )
    return report, _manifest(args, model_id=model.model_id)


# ---------------------------------------------------------------------------
# Design and simulation
# ---------------------------------------------------------------------------


def cmd_design(args: argparse.Namespace) -> tuple[BaseModel, RunManifest]:
    defaults = get_section("design")
    alpha = args.alpha if args.alpha is not None else defaults["alpha"]
    power = args.power if args.power is not None else defaults["power"]
    pi = args.pi if args.pi is not None else defaults["pi"]
    log_hr = args.log_hr
    if log_hr is None and args.hr is not None:
        if args.hr <= 0:
            raise ValidationError(f"--hr must be positive, got {args.hr}")
        log_hr = float(np.log(args.hr))
    inp = DesignInput(rho=args.rho, d_unadj=args.events, alpha=alpha, power=power, theta_alt=log_hr, pi=pi)
    out = events_required_stratified(inp) if args.stratified else events_required(inp)
    curve = None
    if args.hr_grid:
        frame = power_curve(args.hr_grid, out.d_unadj, alpha=alpha, pi=pi, rho=args.rho)
        curve = frame.to_dict(orient="records")
    report = DesignReport.from_output(out, alpha=alpha, power=power, log_hr=log_hr, pi=pi, power_curve=curve)
    return report, _manifest(args)


def _scenario_base(args: argparse.Namespace) -> dict[str, Any]:
    """Scenario fields resolved as flag > scenario JSON > defaults file > built-in."""
    base = dict(get_section("simulation"))
    if args.scenario:
        base.update(load_json_file(args.scenario))
    flags = {
        "n_external": args.n_external,
        "n_replicates": args.reps,
        "seed": args.seed,
        "alpha": args.alpha,
        "pi": args.pi,
        "strategy": args.strategy,
        "stratify": args.stratify,
        "n_strata": args.n_strata,
        "tau_quantile": args.tau_quantile,
    }
    base.update({k: v for k, v in flags.items() if v is not None})
    return base


def cmd_simulate(args: argparse.Namespace) -> tuple[BaseModel, RunManifest]:
    base = _scenario_base(args)
    if args.seed is None:
        print(f"seed: {base['seed']}", file=sys.stderr)
    forest = get_section("forest")
    cases = args.case or [base.pop("case", "I")]
    effects = args.effect or [base.pop("effect", "null")]
    sizes = args.n or [base.pop("n_trial", 400)]
    for key in ("case", "effect", "n_trial"):
        base.pop(key, None)

    scenarios = []
    for case in cases:
        for effect in effects:
            for n in sizes:
                config = ScenarioConfig(**base, case=case, effect=effect, n_trial=n)
                scenarios.append(run_scenario(config, args.workers, forest))

    curve = None
    if args.power_curve:
        config = ScenarioConfig(**base, case=cases[0], effect="efficacy", n_trial=sizes[0])
        frame = simulate_power_curve(config, args.power_curve, args.workers, forest)
        curve = frame.to_dict(orient="records")

    report = SimulateReport(seed=int(base["seed"]), scenarios=scenarios, power_curve=curve)
    resolved = base | {"cases": cases, "effects": effects, "sizes": sizes, "forest": forest}
    return report, _manifest(args, seed=int(base["seed"]), config=resolved)


# ---------------------------------------------------------------------------
# Output plumbing
# ---------------------------------------------------------------------------


def _manifest(
    args: argparse.Namespace,
    *,
    model_id: str | None = None,
    seed: int | None = None,
    config: dict[str, Any] | None = None,
) -> RunManifest:
    inputs = {name: getattr(args, name, None) for name in ("data", "score", "model", "external", "scenario")}
    resolved = config if config is not None else {
        k: v for k, v in vars(args).items() if k not in ("handler", "format", "out", "verbose") and v is not None
    }
    return RunManifest(
        command=args.command,
        argv=list(getattr(args, "argv", [])),
        config=json.loads(json.dumps(resolved, default=str)),
        input_hashes=hash_inputs(inputs),
        model_id=model_id,
        seed=seed,
        started_at=args.started_at,
    )


def emit(report: BaseModel, manifest: RunManifest, args: argparse.Namespace) -> None:
    """Print the report and, with --out, write it plus its manifest."""
    text = report.model_dump_json(indent=2)
    print(render_table(report) if args.format == "table" else text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n", encoding="utf-8")
        manifest_file = save_manifest(manifest, out)
        logger.info("[CLI] wrote %s and %s", out, manifest_file)


def _print_error(code: str, message: str, details: dict[str, Any] | None = None) -> None:
    payload = ErrorReport(error={"code": code, "message": message, "details": details or {}})
    print(json.dumps(payload.model_dump(), indent=2, default=str), file=sys.stderr)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "table"), default="json", help="Output format")
    common.add_argument("--out", help="Also write the JSON report (and its manifest) to this file")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    common.add_argument("--config", help="Defaults JSON file (overrides SURVADJ_CONFIG)")
    return common


def _trial_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="Trial CSV (time, event, arm[, stratum], covariates)")
    parser.add_argument("--score", help="CSV with one prognostic score per trial row")
    parser.add_argument("--model", help="Prognostic model file used to score the trial")
    parser.add_argument("--adjust", choices=ADJUST_CHOICES, help="Adjustment set (default: score if given)")
    parser.add_argument("--covariates", help="Comma-separated covariate columns (default: all)")
    parser.add_argument("--stratified", action="store_true", help="Use the 'stratum' column")
    parser.add_argument("--tau", type=float, help="Analysis horizon (default: max follow-up)")
    parser.add_argument("--pi", type=float, help="Target allocation (default: observed)")
    parser.add_argument("--strict", action="store_true", help="Fail instead of clamping a nonpositive variance")


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="survadj",
        description="Covariate-adjusted log-rank tests and hazard ratio estimation with prognostic scores.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common], help="Estimate the (adjusted) log hazard ratio")
    _trial_options(fit)
    fit.add_argument("--alpha", type=float, help="CI level is 1 - alpha")
    fit.set_defaults(handler=cmd_fit)

    test = sub.add_parser("test", parents=[common], help="(Adjusted) log-rank test of no treatment effect")
    _trial_options(test)
    test.add_argument("--alternative", choices=("two-sided", "less", "greater"))
    test.set_defaults(handler=cmd_test)

    tr = sub.add_parser("train", parents=[common], help="Train a prognostic model on external controls")
    tr.add_argument("--external", required=True, help="External control CSV (time, event, covariates)")
    tr.add_argument("--model-out", required=True, help="Where to write the model container")
    tr.add_argument("--target", choices=("martingale", "survival"), default="martingale")
    tr.add_argument("--at-time", type=float, help="Survival target time (default: median follow-up)")
    tr.add_argument("--features", help="Comma-separated feature columns (default: all)")
    tr.add_argument("--tau", type=float, help="Horizon for the external cohort")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--n-estimators", type=int)
    tr.add_argument("--max-depth", type=int)
    tr.add_argument("--min-samples-leaf", type=int)
    tr.add_argument("--max-features", type=int)
    tr.set_defaults(handler=cmd_train)

    sc = sub.add_parser("score", parents=[common], help="Score a trial and estimate rho")
    sc.add_argument("--data", required=True)
    sc.add_argument("--model", required=True)
    sc.add_argument("--scores-out", help="Write the scores to this CSV")
    sc.add_argument("--tau", type=float)
    sc.set_defaults(handler=cmd_score)

    de = sub.add_parser("design", parents=[common], help="Events required for the adjusted test")
    de.add_argument("--rho", type=float, required=True, help="Score-residual correlation")
    de.add_argument("--events", type=int, help="Events planned for the unadjusted test")
    de.add_argument("--hr", type=float, help="Alternative hazard ratio")
    de.add_argument("--log-hr", type=float, help="Alternative log hazard ratio")
    de.add_argument("--alpha", type=float)
    de.add_argument("--power", type=float)
    de.add_argument("--pi", type=float)
    de.add_argument("--stratified", action="store_true", help="Treat --rho as the within-stratum rho")
    de.add_argument("--hr-grid", type=_float_list, help="Comma-separated HRs for a power curve")
    de.set_defaults(handler=cmd_design)

    si = sub.add_parser("simulate", parents=[common], help="Monte Carlo operating characteristics")
    si.add_argument("--case", nargs="+", choices=CASES)
    si.add_argument("--effect", nargs="+", choices=EFFECTS)
    si.add_argument("--n", type=_int_list, help="Comma-separated trial sizes")
    si.add_argument("--reps", type=int)
    si.add_argument("--n-external", type=int)
    si.add_argument("--seed", type=int)
    si.add_argument("--alpha", type=float)
    si.add_argument("--pi", type=float)
    si.add_argument("--strategy", choices=STRATEGIES)
    si.add_argument("--stratify", choices=("none", "x1", "independent"))
    si.add_argument("--n-strata", type=int)
    si.add_argument("--tau-quantile", type=float)
    si.add_argument("--workers", type=int, help="Worker processes (default: SURVADJ_WORKERS or 1)")
    si.add_argument("--scenario", help="Scenario JSON file")
    si.add_argument("--power-curve", type=_float_list, help="Comma-separated HRs to simulate power at")
    si.set_defaults(handler=cmd_simulate)

    schema = sub.add_parser("schema", help="Print the JSON schema of a report kind")
    schema.add_argument("kind", choices=tuple(REPORT_MODELS))

    validate = sub.add_parser("validate", help="Validate a JSON report file")
    validate.add_argument("file")
    validate.add_argument("--kind", choices=tuple(REPORT_MODELS))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(getattr(args, "verbose", 0))
    args.argv = list(argv) if argv is not None else sys.argv[1:]
    args.started_at = utc_now()

    if args.command == "schema":
        print(json.dumps(REPORT_MODELS[args.kind].model_json_schema(), indent=2))
        return 0
    if args.command == "validate":
        ok, message = validate_report(file_path=args.file, kind=args.kind)
        print(message)
        return 0 if ok else 2

    if args.config:
        os.environ["SURVADJ_CONFIG"] = args.config
        reset_defaults_cache()
    try:
        report, manifest = args.handler(args)
        emit(report, manifest, args)
    except SurvAdjError as e:
        logger.debug("[CLI] %s failed", args.command, exc_info=True)
        _print_error(e.code, e.message, e.details)
        return e.exit_code
    except PydanticValidationError as e:
        _print_error("validation_error", "Invalid configuration", {"errors": json.loads(e.json())})
        return 2
    except Exception as e:  # noqa: BLE001
        logger.exception("[CLI] unexpected failure in %s", args.command)
        _print_error("internal_error", str(e))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
