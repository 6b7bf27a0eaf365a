import numpy as np
import pytest

from placeboiv import errors
from placeboiv import estimators
from placeboiv.data import TrialDataset
from placeboiv.inference import RandomizationEngine
from placeboiv.model import EstimateKind
from placeboiv.model import PretestBranch

from .conftest import four_rows
from .conftest import simulated


def test_sample_cov_by_hand():
    assert estimators.sample_cov([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(0.25)
    assert estimators.sample_cov([0, 0, 1, 1], [1, 1, 3, 3]) == pytest.approx(0.5)
    assert estimators.sample_cov([2, 2, 2, 2], [1, 5, 3, 3]) == 0.0


def test_sample_cov_length_mismatch():
    with pytest.raises(errors.LengthMismatchError):
        estimators.sample_cov([0, 1, 0], [1, 2])


def test_placebo_iv_by_hand(hand_dataset):
    estimate = estimators.placebo_iv(hand_dataset)
    assert estimate.value == pytest.approx(2.0)
    assert estimate.numerator == pytest.approx(0.5)
    assert estimate.denominator == pytest.approx(0.25)
    assert estimate.kind == EstimateKind.PLACEBO_IV


def test_placebo_iv_constant_outcome_and_instrument():
    assert estimators.placebo_iv(four_rows(y=[4, 4, 4, 4])).value == 0.0
    with pytest.raises(errors.DegenerateInstrumentError, match=r"cov\(Q,M\)"):
        estimators.placebo_iv(four_rows(q=[1, 1, 1, 1]))


def test_placebo_residuals(hand_dataset):
    np.testing.assert_allclose(
        estimators.placebo_residuals(hand_dataset, 2.0).values, [1, -1, 1, -1]
    )
    np.testing.assert_array_equal(
        estimators.placebo_residuals(hand_dataset, 0.0).values, hand_dataset.y
    )
    zero_mediator = four_rows(m=[0, 0, 0, 0])
    np.testing.assert_array_equal(
        estimators.placebo_residuals(zero_mediator, 3.7).values, zero_mediator.y
    )


def test_two_step_by_hand(hand_dataset):
    estimate = estimators.treatment_iv_two_step(hand_dataset)
    assert estimate.value == pytest.approx(-2.0)
    assert estimate.numerator == pytest.approx(-0.5)
    assert estimate.denominator == pytest.approx(0.25)


def test_two_step_perfect_placebo_mediation():
    dataset = four_rows(y=[0, 1, 1, 2])
    assert estimators.placebo_iv(dataset).value == pytest.approx(1.0)
    assert estimators.treatment_iv_two_step(dataset).value == pytest.approx(0.0, abs=1e-12)


def test_two_step_degenerate_treatment_instrument():
    with pytest.raises(errors.DegenerateInstrumentError, match=r"cov\(Z,X\)"):
        estimators.treatment_iv_two_step(four_rows(z=[1, 1, 1, 1]))


def test_unadjusted_by_hand(hand_dataset):
    assert estimators.treatment_iv_unadjusted(hand_dataset).value == pytest.approx(0.0)
    assert estimators.treatment_iv_unadjusted(four_rows(y=[0, 2, 0, 2])).value == pytest.approx(
        2.0
    )
    assert estimators.treatment_iv_unadjusted(four_rows(y=[5, 5, 5, 5])).value == 0.0


def test_itt_by_hand(hand_dataset):
    itt = estimators.itt_psi(hand_dataset)
    assert itt.value == pytest.approx(2.0)
    assert itt.value == pytest.approx(itt.numerator / itt.denominator)
    with pytest.raises(errors.EmptyArmError):
        estimators.itt_psi(four_rows(q=[1, 1, 1, 1]))


def test_moment_identity(dataset):
    k1 = estimators.scale_factor(dataset.q, dataset.m)
    psi = estimators.placebo_iv(dataset).value
    assert psi * k1 == pytest.approx(estimators.itt_psi(dataset).value, rel=1e-12)

    residuals = estimators.placebo_residuals(dataset, psi)
    k2 = estimators.scale_factor(dataset.z, dataset.x)
    beta = estimators.treatment_iv_two_step(dataset).value
    assert beta * k2 == pytest.approx(estimators.itt_beta(dataset, residuals).value, rel=1e-12)


def test_shift_and_scale_invariance(dataset):
    psi = estimators.placebo_iv(dataset).value
    beta = estimators.treatment_iv_two_step(dataset).value
    shifted = dataset.replace(y=dataset.y + 17.0)
    assert estimators.placebo_iv(shifted).value == pytest.approx(psi, rel=1e-9)
    assert estimators.treatment_iv_two_step(shifted).value == pytest.approx(beta, rel=1e-9)
    scaled = dataset.replace(y=dataset.y * -3.0)
    assert estimators.placebo_iv(scaled).value == pytest.approx(-3.0 * psi, rel=1e-10)
    assert estimators.treatment_iv_two_step(scaled).value == pytest.approx(-3.0 * beta, rel=1e-10)


def test_ols_recovers_noiseless_coefficients(dataset):
    exact = dataset.replace(y=1.0 + 2.0 * dataset.x + 3.0 * dataset.m)
    fit = estimators.ols_fit(exact)
    assert fit.coefficients["intercept"] == pytest.approx(1.0, abs=1e-10)
    assert fit.coefficients["beta"] == pytest.approx(2.0, abs=1e-10)
    assert fit.coefficients["psi"] == pytest.approx(3.0, abs=1e-10)
    assert estimators.ols_estimate(fit, EstimateKind.OLS_PSI).value == fit.coefficients["psi"]


def test_ols_matches_normal_equations(rng):
    for _ in range(5):
        n = 12
        dataset = four_rows().replace(
            **{name: rng.integers(0, 2, n) for name in ("z", "q", "e", "d")},
            x=np.r_[0, 1, rng.integers(0, 2, n - 2)],
            i=np.zeros(n),
            m=rng.normal(size=n),
            y=rng.normal(size=n),
        )
        design = np.column_stack([np.ones(n), dataset.x, dataset.m])
        solved = np.linalg.solve(design.T @ design, design.T @ dataset.y)
        fit = estimators.ols_fit(dataset)
        found = [fit.coefficients[name] for name in ("intercept", "beta", "psi")]
        np.testing.assert_allclose(found, solved, atol=1e-10)
        assert fit.df_resid == n - 3


def test_ols_rank_deficient():
    with pytest.raises(errors.RankDeficientError):
        estimators.ols_fit(four_rows(x=[1, 1, 1, 1]))


def test_residualize_on_covariates(dataset):
    target = dataset.y
    same = dataset.replace(covariates={"c_copy": target})
    residuals = estimators.residualize_on_covariates(same, ["y"])["y"]
    np.testing.assert_allclose(residuals.values, 0.0, atol=1e-9)

    none = estimators.residualize_on_covariates(dataset, ["y"])["y"]
    np.testing.assert_allclose(none.values, target - target.mean())

    with pytest.raises(errors.MissingColumnError):
        estimators.residualize_on_covariates(dataset, ["y"], ["c_absent"])


def test_adjust_for_covariates_replaces_targets(dataset, rng):
    noise = dataset.replace(covariates={"c_noise": rng.normal(size=dataset.n)})
    adjusted = estimators.adjust_for_covariates(noise)
    assert abs(adjusted.y.mean()) < 1e-9
    np.testing.assert_array_equal(adjusted.q, dataset.q)


def factorial(psi: float, kappa: float, beta: float) -> TrialDataset:
    z, q, w = (np.array(bits, dtype=float) for bits in zip(*np.ndindex(2, 2, 2)))
    x, m, a = z, q + 0.5, w * 2.0
    return TrialDataset.from_interaction(
        z=z, q=q, x=x, e=z, d=q, m=m, y=psi * m + kappa * a + beta * x, a=a, w=w
    )


def test_multi_mediator_exact_recovery():
    estimate = estimators.multi_mediator_two_step(factorial(psi=1.5, kappa=-0.75, beta=2.0))
    assert estimate.psi.value == pytest.approx(1.5, abs=1e-12)
    assert estimate.kappa.value == pytest.approx(-0.75, abs=1e-12)
    assert estimate.beta.value == pytest.approx(2.0, abs=1e-12)
    assert estimate.beta.kind == EstimateKind.TREATMENT_IV_MULTI_MEDIATOR


def test_multi_mediator_needs_instrument_and_columns(hand_dataset):
    dataset = factorial(1.0, 1.0, 1.0)
    with pytest.raises(errors.DegenerateInstrumentError, match=r"cov\(W,A\)"):
        estimators.multi_mediator_two_step(dataset.replace(w=np.ones(8)))
    with pytest.raises(errors.MissingColumnError):
        estimators.multi_mediator_two_step(hand_dataset)


def test_diagnostics():
    dataset = four_rows(d=[0, 0, 1, 1])
    found = estimators.diagnostics(dataset)
    assert found.cor_qd == pytest.approx(1.0)
    assert found.weak_instruments() == []

    flat = estimators.diagnostics(four_rows(x=[1, 1, 1, 1]))
    assert flat.cor_zx is None
    assert "cor_zx" in flat.weak_instruments()


def test_diagnostics_exact_desire_expectation_fit(dataset):
    exact = dataset.replace(m=dataset.e + dataset.d + dataset.i)
    assert estimators.diagnostics(exact).desire_expectation_fit.r_squared == pytest.approx(1.0)


def test_pretest_zero_alpha_keeps_unadjusted(dataset):
    engine = RandomizationEngine(199, seed=3)
    estimate = estimators.pretest_strategy(dataset, 0.0, engine)
    assert estimate.branch == PretestBranch.UNADJUSTED
    assert estimate.value == estimators.treatment_iv_unadjusted(dataset).value


def test_pretest_strong_placebo_effect_adjusts():
    branches = []
    for seed in range(20):
        dataset = simulated(n=600, seed=seed, strength=3.0)
        estimate = estimators.pretest_strategy(dataset, 0.05, RandomizationEngine(199, seed=seed))
        assert (estimate.branch == PretestBranch.TWO_STEP) == (estimate.pretest_p_value < 0.05)
        branches.append(estimate.branch)
    assert branches.count(PretestBranch.TWO_STEP) >= 18
    with pytest.raises(ValueError):
        estimators.pretest_strategy(dataset, 1.5, RandomizationEngine(199, seed=3))
