import numpy as np
import pytest
from pydantic import ValidationError

from placeboiv import data
from placeboiv import errors
from placeboiv import simulator
from placeboiv.simulator import ParameterPoint
from placeboiv.simulator import ScenarioConfig

from .conftest import simulated


def scenario(**overrides) -> ScenarioConfig:
    values = dict(blinded=False, confounded=True, psi_null=False, beta_null=False)
    values.update(overrides)
    return ScenarioConfig(**values)


def test_panels_and_names():
    assert scenario(blinded=True).panel == "a"
    assert scenario().panel == "b"
    assert scenario(blinded=True, confounded=False).panel == "c"
    assert scenario(confounded=False).panel == "d"
    assert scenario(psi_null=True).name == "unblinded_confounded_psi0_beta1"
    assert scenario(extended_mediator=True).name.endswith("_extended")


def test_generated_datasets_are_valid():
    for seed in range(3):
        dataset = simulated(n=120, seed=seed)
        assert dataset.n == 120
        assert data.validate(dataset) == []
        np.testing.assert_array_equal(dataset.i, dataset.e * dataset.d)


def test_generation_is_a_pure_function_of_seed():
    assert simulated(seed=5) == simulated(seed=5)
    assert simulated(seed=5) != simulated(seed=6)


def test_zero_coefficients_give_fair_treatment():
    dataset = simulator.generate(
        scenario(blinded=True, confounded=False, psi_null=True, beta_null=True),
        ParameterPoint(n=1000),
        seed=3,
    )
    assert abs(dataset.x.mean() - 0.5) < 4 * np.sqrt(0.25 / 1000)


def test_unblinded_expectation_follows_treatment():
    point = ParameterPoint(n=1000, theta_XZ=1.5, theta_EX=2.0)
    dataset = simulator.generate(
        scenario(confounded=False, psi_null=True, beta_null=True), point, seed=8
    )
    assert np.corrcoef(dataset.x, dataset.e)[0, 1] > 0.2


def test_blinded_unconfounded_expectation_is_independent_of_treatment():
    point = ParameterPoint.uniform(2000).copy(
        update={"theta_EX": 0.0, **{name: 0.0 for name in simulator.CONFOUNDER_LOADINGS}}
    )
    dataset = simulator.generate(scenario(blinded=True, confounded=False), point, seed=4)
    assert abs(np.corrcoef(dataset.x, dataset.e)[0, 1]) < 0.1


def test_constraints_are_enforced():
    with pytest.raises(errors.ConstraintViolationError, match="theta_EX"):
        simulator.generate(scenario(blinded=True), ParameterPoint.uniform(100), seed=1)
    with pytest.raises(errors.ConstraintViolationError, match="psi"):
        simulator.check_constraints(scenario(psi_null=True), ParameterPoint(n=100, psi=0.5))
    with pytest.raises(errors.ConstraintViolationError, match="kappa"):
        simulator.check_constraints(scenario(), ParameterPoint(n=100, kappa=1.0))
    with pytest.raises(ValidationError):
        ParameterPoint(n=3)


def test_oracle_effects_and_aliases():
    point = ParameterPoint(n=50, theta_YM=-1.5, theta_YX=0.75)
    assert simulator.oracle_effects(point) == (-1.5, 0.75)
    assert simulator.oracle_effects(ParameterPoint.uniform(300)) == (1.0, 1.0)


def test_extended_model_adds_mediator():
    config = scenario(extended_mediator=True)
    point = ParameterPoint.uniform(400, extended=True)
    dataset = simulator.generate_extended(config, point, seed=2)
    assert dataset.extended
    assert set(np.unique(dataset.w)) <= {0.0, 1.0}
    assert simulator.generate(config, point, seed=2) == dataset
    assert data.validate(dataset) == []
    with pytest.raises(errors.ConstraintViolationError):
        simulator.generate_extended(scenario(), ParameterPoint.uniform(400), seed=2)


def test_extended_variables_leave_core_draws_untouched():
    point = ParameterPoint.uniform(200, extended=True).copy(
        update={"kappa": 0.0, "theta_XC4": 0.0}
    )
    core = ParameterPoint.uniform(200)
    extended = simulator.generate(scenario(extended_mediator=True), point, seed=9)
    plain = simulator.generate(scenario(), core, seed=9)
    np.testing.assert_array_equal(extended.z, plain.z)
    np.testing.assert_array_equal(extended.q, plain.q)
    np.testing.assert_array_equal(extended.x, plain.x)
    np.testing.assert_array_equal(extended.m, plain.m)


def test_parameter_space_matches_scenario():
    names = [dimension.name for dimension in simulator.parameter_space(scenario(blinded=True))]
    assert names[0] == "n"
    assert "theta_EX" not in names
    assert {"beta", "psi", "theta_XU"} <= set(names)
    null_free = simulator.parameter_space(
        scenario(confounded=False, psi_null=True, beta_null=True), (300, 300)
    )
    assert [dimension.name for dimension in null_free] == list(simulator.INSTRUMENT_LOADINGS) + [
        "theta_EX"
    ]
    extended = simulator.parameter_space(scenario(blinded=True, extended_mediator=True))
    assert "theta_AW" in {dimension.name for dimension in extended}
    assert "theta_AX" not in {dimension.name for dimension in extended}
