"""Monte Carlo experiments: simulate, estimate, test and aggregate over a design.

Replicates are independent work units. Each draws its data and its
permutations from seeds derived from ``(master_seed, replicate index)``, so
results do not depend on execution order or on the number of workers.
"""
from __future__ import annotations

import concurrent.futures
import logging
import math
import os
from enum import Enum
from typing import Any
from typing import Callable
from typing import Iterable
from typing import Iterator
from typing import Optional
from typing import Sequence
from typing import TypeVar
from typing import Union

import numpy as np
import pandas as pd
from pydantic import BaseModel
from pydantic import NonNegativeInt
from pydantic import PositiveInt
from pydantic import conlist
from pydantic import root_validator
from pydantic import validator
from scipy import stats
from tqdm import tqdm

from . import design as lhs
from . import errors
from . import estimators
from . import inference
from . import methods
from . import paths
from . import rng
from . import simulator
from .base import BaseExecutor
from .data import TrialDataset
from .model import BaseResultModel
from .model import Effect
from .model import MethodOutcome
from .model import PlaceboConfig
from .model import Probability
from .model import RandTestResult
from .simulator import ParameterPoint
from .simulator import ScenarioConfig


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]
T = TypeVar("T")
R = TypeVar("R")

DEFAULT_ALPHA_GRID = tuple(round(0.002 * k, 3) for k in range(1, 101))
DEFAULT_METHODS = (
    methods.Method.IV_PLACEBO,
    methods.Method.IV_TWO_STEP,
    methods.Method.IV_UNADJUSTED,
    methods.Method.IV_TRUE_PSI_ADJUSTED,
    methods.Method.OLS,
    methods.Method.PRETEST,
)
EXTENDED_METHODS = (
    methods.Method.MULTI_MEDIATOR,
    methods.Method.MULTI_MEDIATOR_TRUE,
    methods.Method.IV_TWO_STEP,
    methods.Method.IV_UNADJUSTED,
    methods.Method.OLS,
)
HARNESS_PERMUTATIONS = 999
MC_SPREAD = 3.0
TAIL_THRESHOLD = 0.5
BIAS_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class CurveKind(str, Enum):
    TYPE1 = "type1"
    POWER = "power"


class Verdict(str, Enum):
    EXACT = "exact"
    INFLATED = "inflated"
    CONSERVATIVE = "conservative"


class ExperimentPlan(BaseModel):
    """One simulation experiment.

    ``design.dimensions`` defaults to the scenario's free parameters over
    ``n_range`` and ``design.seed`` to a seed derived from ``master_seed``.
    """

    name: str = ""
    scenario: ScenarioConfig
    design: lhs.DesignSpec
    methods: conlist(methods.Method, min_items=1) = list(DEFAULT_METHODS)
    n_permutations: PositiveInt = HARNESS_PERMUTATIONS
    alpha_grid: conlist(float, min_items=1) = list(DEFAULT_ALPHA_GRID)
    master_seed: rng.Seed
    alpha_pretest: Probability = 0.05
    n_range: tuple[int, int] = simulator.SAMPLE_SIZE_RANGE

    class Config(PlaceboConfig):
        allow_mutation = False

    @root_validator(pre=True)
    def default_design(cls, values: dict[str, Any]) -> dict[str, Any]:
        design = values.get("design") or {}
        if not isinstance(design, dict):
            return values
        design = dict(design)
        scenario = values.get("scenario")
        if "dimensions" not in design and scenario is not None:
            try:
                config = ScenarioConfig.parse_obj(scenario)
            except ValueError:
                return values
            n_range = tuple(values.get("n_range") or simulator.SAMPLE_SIZE_RANGE)
            design["dimensions"] = [
                dimension.dict() for dimension in simulator.parameter_space(config, n_range)
            ]
        if "seed" not in design and isinstance(values.get("master_seed"), int):
            design["seed"] = rng.derive_seed(values["master_seed"], rng.Tag.DESIGN)
        values["design"] = design
        if not values.get("name") and scenario is not None:
            try:
                values["name"] = ScenarioConfig.parse_obj(scenario).name
            except ValueError:
                pass
        return values

    @validator("alpha_grid")
    def increasing_alphas(cls, value: list[float]) -> list[float]:
        if any(not 0.0 < alpha < 1.0 for alpha in value):
            raise ValueError("every alpha must be in (0, 1)")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("alpha_grid must be strictly increasing")
        return value

    @validator("n_range")
    def ordered_range(cls, value: tuple[int, int]) -> tuple[int, int]:
        low, high = value
        if low > high or low < simulator.MIN_PARTICIPANTS:
            raise ValueError(f"n_range must satisfy {simulator.MIN_PARTICIPANTS} <= low <= high")
        return value

    @root_validator(skip_on_failure=True)
    def compatible_methods(cls, values: dict[str, Any]) -> dict[str, Any]:
        scenario = values["scenario"]
        for method in values["methods"]:
            if methods.build(method).requires_extended and not scenario.extended_mediator:
                raise ValueError(f"method '{method}' needs an extended_mediator scenario")
        return values

    def parameter_points(self) -> list[ParameterPoint]:
        fixed = {}
        if self.n_range[0] == self.n_range[1]:
            fixed["n"] = self.n_range[0]
        return simulator.points_from_design(lhs.build_design(self.design), **fixed)


class ReplicateRecord(BaseModel):
    index: NonNegativeInt
    point: ParameterPoint
    true_psi: float
    true_beta: float
    cor_qm: Optional[float]
    cor_zx: Optional[float]
    outcomes: list[MethodOutcome]

    class Config(PlaceboConfig):
        allow_mutation = False

    def outcome(self, method: str, effect: Union[Effect, str]) -> Optional[MethodOutcome]:
        effect = Effect(effect)
        for outcome in self.outcomes:
            if outcome.method == method and outcome.effect == effect:
                return outcome
        return None

    def truth(self, effect: Union[Effect, str]) -> float:
        return self.true_psi if Effect(effect) == Effect.PSI else self.true_beta


class CurveRow(BaseResultModel):
    effect: Effect
    kind: CurveKind
    method: str
    alpha: float
    rate: float
    n_replicates: NonNegativeInt
    mc_std_error: float
    n_degenerate: NonNegativeInt


class CurveTable(BaseResultModel):
    rows: list[CurveRow]

    def curve(self, method: str, effect: Union[Effect, str]) -> list[CurveRow]:
        effect = Effect(effect)
        return [row for row in self.rows if row.method == method and row.effect == effect]

    def rate(self, method: str, effect: Union[Effect, str], alpha: float) -> float:
        for row in self.curve(method, effect):
            if math.isclose(row.alpha, alpha, abs_tol=1e-12):
                return row.rate
        raise KeyError(f"No {method}/{effect} row at alpha={alpha}")


class CurveVerdict(BaseResultModel):
    effect: Effect
    kind: CurveKind
    method: str
    alpha: float
    rate: float
    n_replicates: NonNegativeInt
    verdict: Optional[Verdict]
    ks_distance: Optional[float]


class BiasSummary(BaseResultModel):
    method: str
    effect: Effect
    differences: np.ndarray
    quantiles: dict[str, float]
    tail_mass: float
    median_abs_error: float

    @property
    def n(self) -> int:
        return len(self.differences)


class StratifiedRow(BaseResultModel):
    stratum: NonNegativeInt
    lower: float
    upper: float
    alpha: float
    rate: float
    n_replicates: NonNegativeInt


class ConsistencyRow(BaseResultModel):
    n: PositiveInt
    n_replicates: NonNegativeInt
    median_abs_error_psi: float
    median_abs_error_beta: float
    power: float
    type1: float


class CoverageRow(BaseResultModel):
    effect: Effect
    level: float
    coverage: float
    mc_std_error: float
    n_replicates: NonNegativeInt
    n_failed: NonNegativeInt
    median_width: float
    median_midpoint_error: float


class SerialExecutor(BaseExecutor):
    __slots__ = ()

    def map(self, function: Callable[[T], R], items: Iterable[T]) -> Iterator[R]:
        return map(function, items)


class ProcessExecutor(BaseExecutor):
    __slots__ = "_pool", "_chunksize"

    def __init__(self, workers: int, chunksize: int = 4) -> None:
        self._pool = concurrent.futures.ProcessPoolExecutor(max_workers=workers)
        self._chunksize = chunksize

    def map(self, function: Callable[[T], R], items: Iterable[T]) -> Iterator[R]:
        return self._pool.map(function, items, chunksize=self._chunksize)

    def close(self) -> None:
        self._pool.shutdown()


def executor(workers: int) -> BaseExecutor:
    if workers < 1:
        raise ValueError(f"'workers' must be positive; got {workers}")
    return SerialExecutor() if workers == 1 else ProcessExecutor(workers)


def _progress(items: Iterator[R], total: int, label: str, enabled: bool) -> Iterator[R]:
    return tqdm(items, total=total, desc=label, disable=not enabled, leave=False)


def run_replicate(plan: ExperimentPlan, index: int, point: ParameterPoint) -> ReplicateRecord:
    """Generate one dataset and evaluate every method of ``plan`` on it."""
    seeds = rng.RngSeedPlan(master_seed=plan.master_seed)
    dataset = simulator.generate(plan.scenario, point, seeds.dataset_seed(index))
    engine = inference.RandomizationEngine(plan.n_permutations, seeds.permutation_seed(index))
    diagnostics = estimators.diagnostics(dataset)
    outcomes: list[MethodOutcome] = []
    for name in plan.methods:
        outcomes.extend(methods.build(name, plan.alpha_pretest).evaluate(dataset, point, engine))
    truth = simulator.oracle_effects(point)
    logger.debug("Replicate %d of %s done (n=%d)", index, plan.name, point.n)
    return ReplicateRecord(
        index=index,
        point=point,
        true_psi=truth.psi,
        true_beta=truth.beta,
        cor_qm=diagnostics.cor_qm,
        cor_zx=diagnostics.cor_zx,
        outcomes=outcomes,
    )


def _replicate_task(task: tuple[ExperimentPlan, int, ParameterPoint]) -> ReplicateRecord:
    return run_replicate(*task)


def run_points(
    plan: ExperimentPlan,
    points: Sequence[ParameterPoint],
    workers: int = 1,
    progress: bool = False,
) -> list[ReplicateRecord]:
    for point in points:
        simulator.check_constraints(plan.scenario, point)
    tasks = [(plan, index, point) for index, point in enumerate(points)]
    with executor(workers) as pool:
        return list(
            _progress(pool.map(_replicate_task, tasks), len(tasks), plan.name, progress)
        )


def run_experiment(
    plan: ExperimentPlan, workers: int = 1, progress: bool = False
) -> tuple[list[ReplicateRecord], CurveTable]:
    """One dataset per design point, every method on every dataset."""
    points = plan.parameter_points()
    logger.info("Running %s: %d replicates, B=%d", plan.name, len(points), plan.n_permutations)
    records = run_points(plan, points, workers, progress)
    table = compute_curves(records, plan.scenario, plan.alpha_grid)
    degenerate = sum(outcome.degenerate for record in records for outcome in record.outcomes)
    if degenerate:
        logger.info("%s: %d method evaluations marked degenerate", plan.name, degenerate)
    return records, table


def curve_kind(scenario: ScenarioConfig, effect: Union[Effect, str]) -> CurveKind:
    null = scenario.psi_null if Effect(effect) == Effect.PSI else scenario.beta_null
    return CurveKind.TYPE1 if null else CurveKind.POWER


def _method_effects(records: Sequence[ReplicateRecord]) -> list[tuple[str, Effect]]:
    seen: dict[tuple[str, Effect], None] = {}
    for record in records:
        for outcome in record.outcomes:
            seen.setdefault((outcome.method, Effect(outcome.effect)), None)
    return list(seen)


def _p_values(records: Sequence[ReplicateRecord], method: str, effect: Effect) -> np.ndarray:
    values = []
    for record in records:
        outcome = record.outcome(method, effect)
        if outcome is not None and not outcome.degenerate:
            values.append(outcome.p_value)
    return np.asarray(values, dtype=np.float64)


def rejection_rate(p_values: np.ndarray, alpha: float) -> tuple[float, float]:
    """Fraction of ``p <= alpha`` and its Monte Carlo standard error."""
    if p_values.size == 0:
        return math.nan, math.nan
    rate = float(np.mean(p_values <= alpha))
    return rate, math.sqrt(rate * (1 - rate) / p_values.size)


def compute_curves(
    records: Sequence[ReplicateRecord], scenario: ScenarioConfig, alpha_grid: Sequence[float]
) -> CurveTable:
    rows = []
    for method, effect in _method_effects(records):
        p_values = _p_values(records, method, effect)
        degenerate = len(records) - p_values.size
        for alpha in alpha_grid:
            rate, se = rejection_rate(p_values, alpha)
            rows.append(
                CurveRow(
                    effect=effect,
                    kind=curve_kind(scenario, effect),
                    method=method,
                    alpha=alpha,
                    rate=rate,
                    n_replicates=p_values.size,
                    mc_std_error=se,
                    n_degenerate=degenerate,
                )
            )
    return CurveTable(rows=rows)


def true_psi_adjusted_test(
    dataset: TrialDataset,
    true_psi: float,
    n_permutations: int = HARNESS_PERMUTATIONS,
    seed: int = 0,
) -> RandTestResult:
    """Treatment test whose residuals subtract the known psi instead of psi-hat."""
    engine = inference.RandomizationEngine(n_permutations, seed)
    return engine.treatment_test(dataset, adjusted=True, psi=true_psi)


def bias_summary(
    records: Sequence[ReplicateRecord],
    method: str,
    effect: Union[Effect, str] = Effect.BETA,
) -> BiasSummary:
    """Differences ``true - estimate`` over non-degenerate replicates."""
    effect = Effect(effect)
    differences = []
    for record in records:
        outcome = record.outcome(method, effect)
        if outcome is not None and not outcome.degenerate:
            differences.append(record.truth(effect) - outcome.estimate)
    values = np.asarray(differences, dtype=np.float64)
    if values.size:
        labels = map("{:g}".format, BIAS_QUANTILES)
        quantiles = dict(zip(labels, np.quantile(values, BIAS_QUANTILES)))
        tail = float(np.mean(np.abs(values) > TAIL_THRESHOLD))
        median = float(np.median(np.abs(values)))
    else:
        quantiles, tail, median = {}, math.nan, math.nan
    return BiasSummary(
        method=method,
        effect=effect,
        differences=values,
        quantiles={key: float(value) for key, value in quantiles.items()},
        tail_mass=tail,
        median_abs_error=median,
    )


def stratified_power(
    records: Sequence[ReplicateRecord],
    method: str,
    stratifier: str = "cor_qm",
    bins: int = 3,
    alpha_grid: Sequence[float] = (0.05,),
    effect: Optional[Union[Effect, str]] = None,
) -> list[StratifiedRow]:
    """Rejection rates within equal-width bins of a diagnostic correlation."""
    if stratifier not in ("cor_qm", "cor_zx"):
        raise ValueError(f"'stratifier' must be 'cor_qm' or 'cor_zx'; got {stratifier!r}")
    if bins < 1:
        raise ValueError(f"'bins' must be positive; got {bins}")
    if effect is None:
        effect = Effect.PSI if stratifier == "cor_qm" else Effect.BETA
    effect = Effect(effect)
    strata, p_values = [], []
    for record in records:
        outcome = record.outcome(method, effect)
        value = getattr(record, stratifier)
        if outcome is not None and not outcome.degenerate and value is not None:
            strata.append(value)
            p_values.append(outcome.p_value)
    values, p = np.asarray(strata, dtype=np.float64), np.asarray(p_values, dtype=np.float64)
    if values.size:
        edges = np.linspace(values.min(), values.max(), bins + 1)
        assigned = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    else:
        edges, assigned = np.full(bins + 1, math.nan), np.empty(0, dtype=np.intp)
    rows = []
    for stratum in range(bins):
        members = p[assigned == stratum]
        for alpha in alpha_grid:
            rate, _ = rejection_rate(members, alpha)
            rows.append(
                StratifiedRow(
                    stratum=stratum,
                    lower=float(edges[stratum]),
                    upper=float(edges[stratum + 1]),
                    alpha=alpha,
                    rate=rate,
                    n_replicates=members.size,
                )
            )
    return rows


def _fixed_point_plan(
    scenario: ScenarioConfig,
    method_names: Sequence[methods.Method],
    n_permutations: int,
    master_seed: int,
) -> ExperimentPlan:
    return ExperimentPlan(
        scenario=scenario,
        design={"optimizer": lhs.Optimizer.NONE, "iterations": 0},
        methods=list(method_names),
        n_permutations=n_permutations,
        master_seed=master_seed,
    )


def _study_points(
    scenario: ScenarioConfig,
    point: Optional[ParameterPoint],
    n: int,
    replicates: int,
    seed: int,
) -> list[ParameterPoint]:
    if point is not None:
        return [point.copy(update={"n": n})] * replicates
    spec = lhs.DesignSpec(
        dimensions=simulator.parameter_space(scenario, (n, n)),
        n_points=max(replicates, 2),
        seed=seed,
    )
    return simulator.points_from_design(lhs.build_design(spec), n=n)[:replicates]


def consistency_study(
    scenario: ScenarioConfig,
    n_grid: Sequence[int],
    replicates_per_n: int,
    n_permutations: int = HARNESS_PERMUTATIONS,
    master_seed: int = 0,
    alpha: float = 0.05,
    point: Optional[ParameterPoint] = None,
    workers: int = 1,
    progress: bool = False,
) -> list[ConsistencyRow]:
    """Estimation error, power and type-I error of the two-step IV per sample size.

    Power uses ``scenario``; the type-I rate reruns it with beta fixed at 0.
    Without ``point`` every replicate draws its coefficients from a design.
    """
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("'n_grid' must be strictly increasing")
    alternative = scenario.copy(update={"beta_null": False})
    null = scenario.copy(update={"beta_null": True})
    chosen = [methods.Method.IV_PLACEBO, methods.Method.IV_TWO_STEP]
    rows = []
    for position, n in enumerate(n_grid):
        seed = rng.derive_seed(master_seed, position)
        alt_points = _study_points(alternative, point, n, replicates_per_n, seed)
        null_points = [p.copy(update={"beta": 0.0}) for p in alt_points]
        alt_plan = _fixed_point_plan(alternative, chosen, n_permutations, seed)
        null_plan = _fixed_point_plan(null, chosen, n_permutations, rng.derive_seed(seed, 1))
        alt_records = run_points(alt_plan, alt_points, workers, progress)
        null_records = run_points(null_plan, null_points, workers, progress)
        psi_bias = bias_summary(alt_records, methods.Method.IV_PLACEBO.value, Effect.PSI)
        beta_bias = bias_summary(alt_records, methods.Method.IV_TWO_STEP.value, Effect.BETA)
        power, _ = rejection_rate(
            _p_values(alt_records, methods.Method.IV_TWO_STEP.value, Effect.BETA), alpha
        )
        type1, _ = rejection_rate(
            _p_values(null_records, methods.Method.IV_TWO_STEP.value, Effect.BETA), alpha
        )
        rows.append(
            ConsistencyRow(
                n=n,
                n_replicates=len(alt_records),
                median_abs_error_psi=psi_bias.median_abs_error,
                median_abs_error_beta=beta_bias.median_abs_error,
                power=power,
                type1=type1,
            )
        )
        logger.info("Consistency n=%d: power %.3f, type I %.3f", n, power, type1)
    return rows


def _coverage_task(
    task: tuple[ScenarioConfig, ParameterPoint, Effect, Sequence[float], int, int, int]
) -> tuple[Optional[list[tuple[float, float, bool]]], Optional[str]]:
    scenario, point, effect, levels, n_permutations, master_seed, index = task
    seeds = rng.RngSeedPlan(master_seed=master_seed)
    dataset = simulator.generate(scenario, point, seeds.dataset_seed(index))
    truth = simulator.oracle_effects(point)
    true_value = truth.psi if effect == Effect.PSI else truth.beta
    try:
        profile = inference.RandomizationEngine(
            n_permutations, seeds.permutation_seed(index)
        ).profile(dataset, effect)
        intervals = []
        for level in levels:
            ci = inference.ci_from_profile(profile, (1 - level) / 2)
            intervals.append((ci.lower, ci.upper, ci.contains(true_value)))
    except (errors.EstimationError, errors.InferenceError) as error:
        return None, type(error).__name__
    return intervals, None


def coverage_study(
    scenario: ScenarioConfig,
    point: ParameterPoint,
    replicates: int,
    levels: Sequence[float] = (0.90,),
    effect: Union[Effect, str] = Effect.PSI,
    n_permutations: int = HARNESS_PERMUTATIONS,
    master_seed: int = 0,
    workers: int = 1,
    progress: bool = False,
) -> list[CoverageRow]:
    """Fraction of replicates whose test-inversion CI contains the true effect."""
    effect = Effect(effect)
    simulator.check_constraints(scenario, point)
    truth = simulator.oracle_effects(point)
    true_value = truth.psi if effect == Effect.PSI else truth.beta
    tasks = [
        (scenario, point, effect, tuple(levels), n_permutations, master_seed, index)
        for index in range(replicates)
    ]
    with executor(workers) as pool:
        results = list(
            _progress(pool.map(_coverage_task, tasks), len(tasks), "coverage", progress)
        )
    failed = sum(intervals is None for intervals, _ in results)
    rows = []
    for position, level in enumerate(levels):
        found = [intervals[position] for intervals, _ in results if intervals is not None]
        covered = np.array([hit for _, _, hit in found], dtype=np.float64)
        rate = float(covered.mean()) if covered.size else math.nan
        se = math.sqrt(rate * (1 - rate) / covered.size) if covered.size else math.nan
        widths = np.array([upper - lower for lower, upper, _ in found])
        midpoints = np.array([(lower + upper) / 2 for lower, upper, _ in found])
        rows.append(
            CoverageRow(
                effect=effect,
                level=level,
                coverage=rate,
                mc_std_error=se,
                n_replicates=len(found),
                n_failed=failed,
                median_width=float(np.median(widths)) if widths.size else math.nan,
                median_midpoint_error=(
                    float(np.median(np.abs(midpoints - true_value))) if midpoints.size else math.nan
                ),
            )
        )
    return rows


def ks_uniformity(p_values: Iterable[float]) -> float:
    """Kolmogorov-Smirnov distance of ``p_values`` from Uniform(0, 1)."""
    values = np.asarray(list(p_values), dtype=np.float64)
    if values.size == 0:
        return math.nan
    return float(stats.kstest(values, "uniform").statistic)


def classify(rate: float, alpha: float, n: int) -> Optional[Verdict]:
    if n == 0 or math.isnan(rate):
        return None
    spread = MC_SPREAD * math.sqrt(alpha * (1 - alpha) / n)
    if rate > alpha + spread:
        return Verdict.INFLATED
    if rate < alpha - spread:
        return Verdict.CONSERVATIVE
    return Verdict.EXACT


def summarize_curves(
    table: CurveTable,
    alpha: float = 0.05,
    records: Optional[Sequence[ReplicateRecord]] = None,
) -> list[CurveVerdict]:
    """Exact/inflated/conservative verdict per type-I curve at ``alpha``.

    With ``records`` the KS distance of each null p-value sample is attached.
    """
    verdicts = []
    for row in table.rows:
        if not math.isclose(row.alpha, alpha, abs_tol=1e-12):
            continue
        type1 = row.kind == CurveKind.TYPE1
        ks = None
        if type1 and records is not None:
            ks = ks_uniformity(_p_values(records, row.method, Effect(row.effect)))
        verdicts.append(
            CurveVerdict(
                effect=row.effect,
                kind=row.kind,
                method=row.method,
                alpha=row.alpha,
                rate=row.rate,
                n_replicates=row.n_replicates,
                verdict=classify(row.rate, row.alpha, row.n_replicates) if type1 else None,
                ks_distance=ks,
            )
        )
    return verdicts


def scenario_experiments(
    master_seed: int,
    design_points: int = 1000,
    n_permutations: int = HARNESS_PERMUTATIONS,
    iterations: int = 2000,
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID,
) -> list[ExperimentPlan]:
    """The 16 (blinded, confounded, psi null, beta null) experiments."""
    plans = []
    index = 0
    for blinded in (True, False):
        for confounded in (True, False):
            for psi_null in (True, False):
                for beta_null in (True, False):
                    scenario = ScenarioConfig(
                        blinded=blinded,
                        confounded=confounded,
                        psi_null=psi_null,
                        beta_null=beta_null,
                    )
                    plans.append(
                        ExperimentPlan(
                            scenario=scenario,
                            design={"n_points": design_points, "iterations": iterations},
                            n_permutations=n_permutations,
                            alpha_grid=list(alpha_grid),
                            master_seed=rng.derive_seed(master_seed, index),
                        )
                    )
                    index += 1
    return plans


def extended_experiment(
    master_seed: int,
    design_points: int = 1000,
    n_permutations: int = HARNESS_PERMUTATIONS,
    iterations: int = 2000,
    beta_null: bool = True,
) -> ExperimentPlan:
    """Unblinded confounded trial whose placebo path also runs through A."""
    scenario = ScenarioConfig(
        blinded=False,
        confounded=True,
        psi_null=False,
        beta_null=beta_null,
        extended_mediator=True,
    )
    return ExperimentPlan(
        scenario=scenario,
        design={"n_points": design_points, "iterations": iterations},
        methods=list(EXTENDED_METHODS),
        n_permutations=n_permutations,
        master_seed=master_seed,
    )


def curves_to_frame(table: CurveTable) -> pd.DataFrame:
    columns = list(CurveRow.__fields__)
    return pd.DataFrame([row.dict() for row in table.rows], columns=columns)


def curves_from_frame(frame: pd.DataFrame) -> CurveTable:
    return CurveTable(rows=[CurveRow(**row) for row in frame.to_dict(orient="records")])


def records_to_frame(records: Sequence[ReplicateRecord]) -> pd.DataFrame:
    """One row per (replicate, method, effect)."""
    rows = []
    for record in records:
        for outcome in record.outcomes:
            rows.append(
                {
                    "index": record.index,
                    "n": record.point.n,
                    "method": outcome.method,
                    "effect": outcome.effect,
                    "estimate": outcome.estimate,
                    "p_value": outcome.p_value,
                    "error": outcome.error,
                    "truth": record.truth(outcome.effect),
                    "cor_qm": record.cor_qm,
                    "cor_zx": record.cor_zx,
                }
            )
    return pd.DataFrame(rows)


def _models_to_frame(models: Sequence[BaseModel], exclude: Optional[set] = None) -> pd.DataFrame:
    return pd.DataFrame([model.dict(exclude=exclude) for model in models])


def _write(frame: pd.DataFrame, path: PathLike) -> None:
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def write_experiment(
    plan: ExperimentPlan,
    records: Sequence[ReplicateRecord],
    table: CurveTable,
    directory: PathLike,
    alpha: float = 0.05,
) -> list[str]:
    """Write curve, record, bias and summary tables; returns the file names."""
    os.makedirs(directory, exist_ok=True)
    _write(curves_to_frame(table), paths.curves(directory))
    _write(records_to_frame(records), paths.records(directory))
    biases = [
        bias_summary(records, method, effect) for method, effect in _method_effects(records)
    ]
    bias_frame = _models_to_frame(biases, exclude={"differences", "quantiles"})
    if biases:
        quantiles = pd.DataFrame([summary.quantiles for summary in biases]).add_prefix("q")
        bias_frame = pd.concat([bias_frame, quantiles], axis=1)
    _write(bias_frame, paths.bias(directory))
    verdicts = summarize_curves(table, _closest(plan.alpha_grid, alpha), records)
    _write(_models_to_frame(verdicts), paths.summary(directory))
    _write(
        pd.DataFrame([record.point.dict() for record in records]),
        paths.design(directory),
    )
    return [
        paths.CURVES,
        paths.RECORDS,
        paths.BIAS,
        paths.SUMMARY,
        paths.DESIGN,
    ]


def write_rows(rows: Sequence[BaseModel], path: PathLike) -> None:
    _write(_models_to_frame(rows), path)


def _closest(grid: Sequence[float], alpha: float) -> float:
    return min(grid, key=lambda value: abs(value - alpha))


def long_format(tables: dict[str, pd.DataFrame]) -> pd.DataFrame:
    """Stack curve tables as ``experiment, effect, kind, method, alpha, rate, se, n``."""
    frames = []
    for experiment, frame in tables.items():
        frames.append(
            pd.DataFrame(
                {
                    "experiment": experiment,
                    "effect": frame["effect"],
                    "kind": frame["kind"],
                    "method": frame["method"],
                    "alpha": frame["alpha"],
                    "rate": frame["rate"],
                    "se": frame["mc_std_error"],
                    "n": frame["n_replicates"],
                }
            )
        )
    columns = ["experiment", "effect", "kind", "method", "alpha", "rate", "se", "n"]
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)[columns]
