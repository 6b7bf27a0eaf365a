"""Command-line entry point: ``placebo-iv <command> ...``."""
from __future__ import annotations

import argparse
import datetime
import logging
import sys
from pathlib import Path
from typing import Any
from typing import Callable
from typing import Optional
from typing import Sequence

import pandas as pd

from . import __version__
from . import data
from . import errors
from . import estimators
from . import harness
from . import inference
from . import paths
from . import plans
from . import rng
from . import simulator
from . import utils
from .model import Effect
from .model import EstimateKind
from .model import RunManifest
from .settings import get_settings


logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
PSI_METHODS = ("iv", "ols")
BETA_METHODS = ("two_step", "unadjusted", "pretest", "multi_mediator", "ols")
TEST_METHODS = ("two_step", "unadjusted", "multi_mediator")


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr, force=True)


def emit(payload: Any) -> None:
    print(utils.dumps(payload))


def _seed(args: argparse.Namespace) -> int:
    if args.seed is None:
        args.seed = rng.draw_seed()
        logger.info("No --seed given; drew %d", args.seed)
    return args.seed


def write_manifest(
    path: Path,
    argv: Sequence[str],
    master_seed: int,
    started: datetime.datetime,
    outputs: Sequence[str],
    config: Any = None,
) -> None:
    manifest = RunManifest(
        command=list(argv),
        config_digest=None if config is None else utils.digest(config),
        master_seed=master_seed,
        version=__version__,
        started=started,
        finished=datetime.datetime.now(datetime.timezone.utc),
        outputs=list(outputs),
    )
    path.write_text(manifest.json(), encoding="utf-8")


def _load_dataset(args: argparse.Namespace) -> data.TrialDataset:
    dataset = data.read_csv(args.dataset)
    if getattr(args, "covariates", False):
        dataset = estimators.adjust_for_covariates(dataset)
    return dataset


def _warnings(dataset: data.TrialDataset) -> list[str]:
    found = []
    for name in estimators.diagnostics(dataset).weak_instruments():
        message = f"weak instrument: |{name}| < 0.1"
        logger.warning(message)
        found.append(message)
    return found


def _engine(args: argparse.Namespace) -> inference.RandomizationEngine:
    return inference.RandomizationEngine(args.permutations, _seed(args), args.workers)


def _write_frame(
    frame: pd.DataFrame,
    out: Path,
    args: argparse.Namespace,
    started: datetime.datetime,
    float_format: Optional[str] = None,
) -> None:
    """Write ``frame`` and its run manifest next to it."""
    frame.to_csv(out, index=False, lineterminator="\n", float_format=float_format)
    write_manifest(paths.sidecar_manifest(out), args.argv, _seed(args), started, [out.name])


def simulate(args: argparse.Namespace) -> None:
    started = datetime.datetime.now(datetime.timezone.utc)
    content = plans.load_yaml(args.config)
    config = plans.parse_simulation(content, str(args.config))
    seed = _seed(args)
    dataset = simulator.generate(config.scenario, config.point, seed)
    out = Path(args.out)
    data.write_csv(dataset, out)
    write_manifest(paths.sidecar_manifest(out), args.argv, seed, started, [out.name], content)
    logger.info("Wrote %d participants to %s", dataset.n, out)


def estimate(args: argparse.Namespace) -> None:
    started = datetime.datetime.now(datetime.timezone.utc)
    dataset = _load_dataset(args)
    effect = Effect(args.effect)
    result: dict[str, Any] = {"effect": effect.value, "method": args.method}
    if args.method == "ols":
        fit = estimators.ols_fit(dataset, include_mediator=dataset.extended)
        kind = EstimateKind.OLS_PSI if effect == Effect.PSI else EstimateKind.OLS_BETA
        result["estimate"] = estimators.ols_estimate(fit, kind).dict()
        result["regression"] = fit.dict()
    elif effect == Effect.PSI:
        if args.method != "iv":
            raise ValueError(f"--method for psi must be one of {PSI_METHODS}")
        result["estimate"] = estimators.placebo_iv(dataset).dict()
        result["itt"] = estimators.itt_psi(dataset).dict()
        result["scale_factor"] = estimators.scale_factor(dataset.q, dataset.m)
    else:
        if args.method == "two_step":
            found = estimators.treatment_iv_two_step(dataset)
        elif args.method == "unadjusted":
            found = estimators.treatment_iv_unadjusted(dataset)
        elif args.method == "pretest":
            alpha = args.alpha_pretest
            if alpha is None:
                alpha = get_settings().alpha_pretest
            found = estimators.pretest_strategy(dataset, alpha, _engine(args))
        elif args.method == "multi_mediator":
            found = estimators.multi_mediator_two_step(dataset).beta
        else:
            raise ValueError(f"--method for beta must be one of {BETA_METHODS}")
        result["estimate"] = found.dict()
        result["scale_factor"] = estimators.scale_factor(dataset.z, dataset.x)
    result["diagnostics"] = estimators.diagnostics(dataset).dict()
    result["warnings"] = _warnings(dataset)
    emit(result)
    if args.out:
        _write_frame(pd.DataFrame([result["estimate"]]), Path(args.out), args, started)


def test(args: argparse.Namespace) -> None:
    started = datetime.datetime.now(datetime.timezone.utc)
    dataset = _load_dataset(args)
    effect = Effect(args.effect)
    if args.exact:
        adjusted = args.method != "unadjusted"
        outcome = inference.exact_rand_test(dataset, effect, adjusted)
    else:
        engine = _engine(args)
        if effect == Effect.PSI:
            outcome = engine.placebo_test(dataset)
        elif args.method == "multi_mediator":
            outcome = engine.multi_mediator_test(dataset)
        else:
            outcome = engine.treatment_test(dataset, adjusted=args.method != "unadjusted")
    result = {"effect": effect.value, "test": outcome.dict(), "warnings": _warnings(dataset)}
    emit(result)
    if args.out:
        frame = pd.DataFrame([outcome.dict(exclude={"null_quantiles"})])
        _write_frame(frame, Path(args.out), args, started)


def ci(args: argparse.Namespace) -> None:
    started = datetime.datetime.now(datetime.timezone.utc)
    dataset = _load_dataset(args)
    engine = _engine(args)
    profile = engine.profile(dataset, args.effect, args.grid_step)
    interval = inference.ci_from_profile(profile, args.alpha)
    emit(
        {
            "effect": profile.effect,
            "ci": interval.dict(),
            "grid_step": profile.grid_step,
            "grid_points": len(profile.grid),
            "n_permutations": profile.n_permutations,
            "seed": profile.seed,
            "warnings": _warnings(dataset),
        }
    )
    if args.out:
        frame = pd.DataFrame([point.dict() for point in profile.grid])
        _write_frame(frame, Path(args.out), args, started, float_format="%.10g")


def _write_stratified(
    records: Sequence[harness.ReplicateRecord], plan: harness.ExperimentPlan, directory: Path
) -> list[str]:
    written = []
    for stratifier, method, null in (
        ("cor_qm", "iv_placebo", plan.scenario.psi_null),
        ("cor_zx", "iv_two_step", plan.scenario.beta_null),
    ):
        if null or method not in plan.methods:
            continue
        rows = harness.stratified_power(records, method, stratifier, bins=3)
        harness.write_rows(rows, paths.stratified(directory, stratifier))
        written.append(paths.stratified(directory, stratifier).name)
    return written


def reseed(plan: harness.ExperimentPlan, master_seed: int) -> harness.ExperimentPlan:
    """Same plan with ``master_seed`` replaced and the design seed derived from it."""
    content = utils.loads(plan.json())
    content["master_seed"] = master_seed
    content["design"].pop("seed", None)
    return harness.ExperimentPlan.parse_obj(content)


def experiment(args: argparse.Namespace) -> None:
    content = plans.load_yaml(args.plan)
    loaded = plans.parse_plans(content, str(args.plan))
    workers = args.workers or get_settings().workers
    for index, plan in enumerate(loaded):
        started = datetime.datetime.now(datetime.timezone.utc)
        if args.seed is not None:
            plan = reseed(plan, rng.derive_seed(args.seed, index))
        directory = paths.experiment_dir(args.out_dir, plan.name)
        records, table = harness.run_experiment(plan, workers, progress=args.progress)
        outputs = harness.write_experiment(plan, records, table, directory)
        outputs += _write_stratified(records, plan, directory)
        write_manifest(
            paths.manifest(directory),
            args.argv,
            plan.master_seed,
            started,
            outputs,
            utils.loads(plan.json()),
        )
        logger.info("Experiment %s written to %s", plan.name, directory)


def study(args: argparse.Namespace) -> None:
    started = datetime.datetime.now(datetime.timezone.utc)
    content = plans.load_yaml(args.config)
    config = plans.parse_simulation(content, str(args.config))
    seed = _seed(args)
    workers = args.workers or get_settings().workers
    out = Path(args.out)
    if args.kind == "consistency":
        rows = harness.consistency_study(
            config.scenario,
            args.n_grid,
            args.replicates,
            args.permutations,
            seed,
            point=None if args.design_points else config.point,
            workers=workers,
            progress=args.progress,
        )
    else:
        rows = harness.coverage_study(
            config.scenario,
            config.point,
            args.replicates,
            args.levels,
            args.effect,
            args.permutations,
            seed,
            workers=workers,
            progress=args.progress,
        )
    harness.write_rows(rows, out)
    write_manifest(paths.sidecar_manifest(out), args.argv, seed, started, [out.name], content)


def report(args: argparse.Namespace) -> None:
    started = datetime.datetime.now(datetime.timezone.utc)
    tables = {
        path.parent.name: pd.read_csv(path) for path in paths.find_curves(args.results)
    }
    if not tables:
        raise FileNotFoundError(f"No {paths.CURVES} found under '{args.results}'")
    out = Path(args.out) if args.out else paths.report(args.results)
    _write_frame(harness.long_format(tables), out, args, started)
    logger.info("Report with %d experiments written to %s", len(tables), out)


def _probability(value: str) -> float:
    number = float(value)
    if not 0.0 < number < 0.5:
        raise argparse.ArgumentTypeError("alpha must be in (0, 0.5)")
    return number


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="placebo-iv",
        description="IV estimation and randomization inference for treatment and placebo effects.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.log_level, help="logging level")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable, help: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help, description=help)
        sub.set_defaults(handler=handler)
        sub.add_argument("--seed", type=int, default=None, help="master seed (drawn if absent)")
        return sub

    def dataset_command(name: str, handler: Callable, help: str) -> argparse.ArgumentParser:
        sub = command(name, handler, help)
        sub.add_argument("dataset", help="trial dataset CSV")
        sub.add_argument("--effect", choices=[e.value for e in Effect], default=Effect.PSI.value)
        sub.add_argument("--permutations", type=int, default=settings.permutations)
        sub.add_argument("--workers", type=int, default=1, help="threads for permutations")
        sub.add_argument(
            "--covariates",
            action="store_true",
            help="replace x and y by their residuals on the c_* columns",
        )
        sub.add_argument("--out", default=None, help="optional CSV output")
        return sub

    sub = command("simulate", simulate, "Generate a synthetic trial dataset.")
    sub.add_argument("config", help="simulation YAML (scenario + point) or bundled name")
    sub.add_argument("--out", required=True, help="dataset CSV to write")

    sub = dataset_command("estimate", estimate, "Point estimates and diagnostics.")
    sub.add_argument("--method", default=None, choices=sorted(set(PSI_METHODS + BETA_METHODS)))
    sub.add_argument("--alpha-pretest", type=float, default=None)

    sub = dataset_command("test", test, "Randomization test of psi = 0 or beta = 0.")
    sub.add_argument("--method", default="two_step", choices=TEST_METHODS)
    sub.add_argument("--exact", action="store_true", help="enumerate all n! orderings")

    sub = dataset_command("ci", ci, "Confidence interval by inverting randomization tests.")
    sub.add_argument("--alpha", type=_probability, default=0.025, help="one-sided level")
    sub.add_argument("--grid-step", type=float, default=None)

    sub = command("experiment", experiment, "Run simulation experiments from a plan.")
    sub.add_argument("plan", help="plan YAML or bundled name such as paper_suite")
    sub.add_argument("--out-dir", required=True)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--progress", action="store_true")

    sub = command("study", study, "Consistency or CI coverage study for one scenario.")
    sub.add_argument("kind", choices=("consistency", "coverage"))
    sub.add_argument("config", help="simulation YAML (scenario + point)")
    sub.add_argument("--out", required=True)
    sub.add_argument("--replicates", type=int, default=300)
    sub.add_argument("--n-grid", type=int, nargs="+", default=[300, 900, 2700])
    sub.add_argument("--design-points", action="store_true", help="draw coefficients per replicate")
    sub.add_argument("--levels", type=float, nargs="+", default=[0.90])
    sub.add_argument("--effect", choices=[e.value for e in Effect], default=Effect.PSI.value)
    sub.add_argument("--permutations", type=int, default=settings.harness_permutations)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--progress", action="store_true")

    sub = command("report", report, "Stack experiment curve tables into one long CSV.")
    sub.add_argument("results", help="directory holding experiment outputs")
    sub.add_argument("--out", default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = ["placebo-iv"] + argv
    configure_logging(args.log_level)
    if args.command == "estimate" and args.method is None:
        args.method = "iv" if args.effect == Effect.PSI.value else "two_step"
    try:
        args.handler(args)
    except Exception as error:
        code = errors.find_exit_code(error)
        if code == errors.EXIT_UNEXPECTED:
            logger.exception("Unexpected failure")
        print(f"{type(error).__name__}: {error}", file=sys.stderr)
        return code
    return errors.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
