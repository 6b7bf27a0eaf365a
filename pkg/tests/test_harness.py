import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from placeboiv import harness
from placeboiv import paths
from placeboiv import rng
from placeboiv import simulator
from placeboiv.harness import CurveKind
from placeboiv.harness import ExperimentPlan
from placeboiv.harness import ReplicateRecord
from placeboiv.harness import Verdict
from placeboiv.inference import RandomizationEngine
from placeboiv.model import Effect
from placeboiv.model import MethodOutcome
from placeboiv.simulator import ParameterPoint
from placeboiv.simulator import ScenarioConfig


BLINDED_NULL = {"blinded": True, "confounded": True, "psi_null": True, "beta_null": True}
UNCONFOUNDED = ScenarioConfig(blinded=True, confounded=False, psi_null=False, beta_null=False)


def unconfounded_point(n: int) -> ParameterPoint:
    zeros = {name: 0.0 for name in ("theta_EX",) + tuple(simulator.CONFOUNDER_LOADINGS)}
    return ParameterPoint.uniform(n).copy(update=zeros)


def small_plan(**overrides) -> ExperimentPlan:
    values = dict(
        scenario=BLINDED_NULL,
        design={"n_points": 12, "iterations": 20},
        n_permutations=99,
        alpha_grid=[0.01, 0.05, 0.1, 0.5],
        master_seed=77,
        n_range=(60, 80),
    )
    values.update(overrides)
    return ExperimentPlan.parse_obj(values)


def record(index: int, estimate: float, p_value: float, cor: float = 0.5) -> ReplicateRecord:
    return ReplicateRecord(
        index=index,
        point=ParameterPoint(n=100, theta_YX=1.0),
        true_psi=0.0,
        true_beta=1.0,
        cor_qm=cor,
        cor_zx=cor,
        outcomes=[
            MethodOutcome(
                method="iv_two_step", effect=Effect.BETA, estimate=estimate, p_value=p_value
            )
        ],
    )


def test_plan_defaults():
    plan = small_plan()
    assert plan.name == "blinded_confounded_psi0_beta0"
    assert plan.design.seed == rng.derive_seed(77, rng.Tag.DESIGN)
    names = [dimension.name for dimension in plan.design.dimensions]
    assert names[0] == "n" and "theta_EX" not in names and "psi" not in names
    assert [method for method in plan.methods] == [m.value for m in harness.DEFAULT_METHODS]
    points = plan.parameter_points()
    assert len(points) == 12
    assert all(60 <= point.n <= 80 for point in points)
    assert len({tuple(point.dict().values()) for point in points}) == 12


def test_plan_validation():
    with pytest.raises(ValidationError, match="increasing"):
        small_plan(alpha_grid=[0.05, 0.01])
    with pytest.raises(ValidationError):
        small_plan(alpha_grid=[0.0, 0.5])
    with pytest.raises(ValidationError):
        small_plan(n_range=(80, 60))
    with pytest.raises(ValidationError, match="extended_mediator"):
        small_plan(methods=["multi_mediator"])
    with pytest.raises(ValidationError):
        small_plan(methods=[])


def test_run_experiment_accounts_for_every_replicate():
    plan = small_plan()
    records, table = harness.run_experiment(plan)
    assert [record.index for record in records] == list(range(12))
    assert all(len(record.outcomes) == 7 for record in records)
    for row in table.rows:
        assert row.n_replicates + row.n_degenerate == 12
        assert row.kind == CurveKind.TYPE1
        if row.n_replicates:
            assert row.mc_std_error == pytest.approx(
                math.sqrt(row.rate * (1 - row.rate) / row.n_replicates)
            )
    for method in ("iv_placebo", "iv_two_step", "ols"):
        for effect in (Effect.PSI, Effect.BETA):
            rates = [row.rate for row in table.curve(method, effect)]
            assert rates == sorted(rates)


def test_run_experiment_replays_exactly():
    plan = small_plan(methods=["iv_placebo", "iv_two_step"])
    first_records, first = harness.run_experiment(plan)
    second_records, second = harness.run_experiment(plan, workers=2)
    assert first == second
    assert [r.outcomes for r in first_records] == [r.outcomes for r in second_records]


def test_curve_kind():
    config = ScenarioConfig(blinded=True, confounded=True, psi_null=True, beta_null=False)
    assert harness.curve_kind(config, Effect.PSI) == CurveKind.TYPE1
    assert harness.curve_kind(config, Effect.BETA) == CurveKind.POWER


def test_rejection_rate_uses_p_at_most_alpha():
    rate, se = harness.rejection_rate(np.array([0.01, 0.05, 0.2, 0.7]), 0.05)
    assert rate == 0.5
    assert se == pytest.approx(math.sqrt(0.25 / 4))
    assert all(math.isnan(value) for value in harness.rejection_rate(np.array([]), 0.05))


def test_true_psi_adjusted_test_at_zero_is_unadjusted(dataset):
    adjusted = harness.true_psi_adjusted_test(dataset, 0.0, n_permutations=199, seed=4)
    unadjusted = RandomizationEngine(199, seed=4).treatment_test(dataset, adjusted=False)
    assert adjusted.p_two_sided == unadjusted.p_two_sided
    assert adjusted.observed_stat == unadjusted.observed_stat


def test_bias_summary():
    exact = [record(k, 1.0, 0.5) for k in range(5)]
    summary = harness.bias_summary(exact, "iv_two_step")
    np.testing.assert_array_equal(summary.differences, np.zeros(5))
    assert summary.tail_mass == 0.0 and summary.median_abs_error == 0.0

    spread = [record(0, 0.0, 0.5), record(1, 1.2, 0.5), record(2, 1.0, 0.5)]
    summary = harness.bias_summary(spread, "iv_two_step")
    assert summary.n == 3
    assert summary.tail_mass == pytest.approx(1 / 3)
    assert summary.quantiles["0.5"] == pytest.approx(0.0)


def test_degenerate_outcomes_are_kept_out_of_curves():
    records = [record(0, 1.0, 0.01), record(1, 1.0, 0.2)]
    records.append(
        ReplicateRecord(
            **{
                **records[0].dict(exclude={"outcomes", "index"}),
                "index": 2,
                "outcomes": [
                    MethodOutcome(
                        method="iv_two_step", effect=Effect.BETA, error="DegenerateInstrumentError"
                    )
                ],
            }
        )
    )
    config = ScenarioConfig(blinded=True, confounded=True, psi_null=True, beta_null=False)
    table = harness.compute_curves(records, config, [0.05])
    (row,) = table.rows
    assert (row.n_replicates, row.n_degenerate, row.rate) == (2, 1, 0.5)
    assert table.rate("iv_two_step", Effect.BETA, 0.05) == 0.5
    assert harness.bias_summary(records, "iv_two_step").n == 2


def test_stratified_power():
    pairs = [(0.01, 0.1), (0.5, 0.15), (0.01, 0.5), (0.01, 0.55), (0.2, 0.9), (0.01, 0.95)]
    records = [record(k, 1.0, p, cor) for k, (p, cor) in enumerate(pairs)]
    single = harness.stratified_power(records, "iv_two_step", "cor_zx", bins=1)
    p_values = np.array([p for p, _ in pairs])
    assert single[0].rate == harness.rejection_rate(p_values, 0.05)[0]
    three = harness.stratified_power(records, "iv_two_step", "cor_zx", bins=3)
    assert [row.n_replicates for row in three] == [2, 2, 2]
    assert [row.rate for row in three] == [0.5, 1.0, 0.5]
    sparse = harness.stratified_power(records[:2], "iv_two_step", "cor_zx", bins=4)
    assert [row.n_replicates for row in sparse] == [1, 0, 0, 1]
    assert math.isnan(sparse[1].rate)
    with pytest.raises(ValueError):
        harness.stratified_power(records, "iv_two_step", "cor_xy")


def test_classify_and_uniformity():
    assert harness.classify(0.05, 0.05, 1000) == Verdict.EXACT
    assert harness.classify(0.2, 0.05, 1000) == Verdict.INFLATED
    assert harness.classify(0.0, 0.05, 1000) == Verdict.CONSERVATIVE
    assert harness.classify(0.05, 0.05, 0) is None
    grid = (np.arange(1000) + 0.5) / 1000
    assert harness.ks_uniformity(grid) < 0.01
    assert harness.ks_uniformity(grid / 2) > 0.4


def test_summaries_and_outputs(tmp_path):
    plan = small_plan(methods=["iv_placebo", "ols"])
    records, table = harness.run_experiment(plan)
    verdicts = harness.summarize_curves(table, 0.05, records)
    assert {verdict.method for verdict in verdicts} == {"iv_placebo", "ols"}
    assert all(verdict.ks_distance is not None for verdict in verdicts)

    written = harness.write_experiment(plan, records, table, tmp_path / "run")
    assert written == [paths.CURVES, paths.RECORDS, paths.BIAS, paths.SUMMARY, paths.DESIGN]
    curves = pd.read_csv(paths.curves(tmp_path / "run"))
    assert harness.curves_from_frame(curves).rate("ols", "psi", 0.1) == pytest.approx(
        table.rate("ols", Effect.PSI, 0.1), rel=1e-9
    )
    assert len(pd.read_csv(paths.records(tmp_path / "run"))) == 12 * 3
    assert len(pd.read_csv(paths.design(tmp_path / "run"))) == 12

    report = harness.long_format({plan.name: curves})
    assert list(report.columns) == [
        "experiment",
        "effect",
        "kind",
        "method",
        "alpha",
        "rate",
        "se",
        "n",
    ]
    assert set(report["experiment"]) == {plan.name}
    assert len(report) == len(curves)


def test_suite_builders():
    plans = harness.scenario_experiments(master_seed=5, design_points=10, iterations=0)
    assert len(plans) == 16
    assert len({plan.name for plan in plans}) == 16
    assert len({plan.master_seed for plan in plans}) == 16
    extended = harness.extended_experiment(master_seed=6, design_points=10, iterations=0)
    assert extended.scenario.extended_mediator
    assert "multi_mediator" in extended.methods


def test_consistency_study_small():
    rows = harness.consistency_study(
        UNCONFOUNDED, [60, 120], 4, n_permutations=99, master_seed=3, point=unconfounded_point(60)
    )
    assert [row.n for row in rows] == [60, 120]
    for row in rows:
        assert row.n_replicates == 4
        assert 0.0 <= row.power <= 1.0 and 0.0 <= row.type1 <= 1.0
    with pytest.raises(ValueError):
        harness.consistency_study(UNCONFOUNDED, [120, 60], 4)


def test_coverage_study_small():
    rows = harness.coverage_study(
        UNCONFOUNDED, unconfounded_point(80), 4, levels=(0.8, 0.9), n_permutations=99, master_seed=2
    )
    assert [row.level for row in rows] == [0.8, 0.9]
    for row in rows:
        assert row.n_replicates + row.n_failed == 4
        assert math.isnan(row.coverage) or 0.0 <= row.coverage <= 1.0


def test_replicate_uses_its_own_seeds():
    plan = small_plan(methods=["iv_placebo"])
    point = plan.parameter_points()[0]
    assert harness.run_replicate(plan, 3, point) == harness.run_replicate(plan, 3, point)
    assert harness.run_replicate(plan, 3, point) != harness.run_replicate(plan, 4, point)
