"""Analysis strategies compared by the experiment harness."""
from __future__ import annotations

from enum import Enum

from . import estimators
from .base import BaseMethod
from .data import TrialDataset
from .inference import RandomizationEngine
from .model import Effect
from .model import EstimateKind
from .model import MethodOutcome
from .model import PretestBranch
from .simulator import ParameterPoint


class Method(str, Enum):
    IV_PLACEBO = "iv_placebo"
    IV_TWO_STEP = "iv_two_step"
    IV_UNADJUSTED = "iv_unadjusted"
    IV_TRUE_PSI_ADJUSTED = "iv_true_psi_adjusted"
    OLS = "ols"
    PRETEST = "pretest"
    MULTI_MEDIATOR = "multi_mediator"
    MULTI_MEDIATOR_TRUE = "multi_mediator_true"


class IvPlacebo(BaseMethod):
    __slots__ = ()
    name = Method.IV_PLACEBO.value
    effects = (Effect.PSI,)

    def _evaluate(
        self, dataset: TrialDataset, truth: ParameterPoint, engine: RandomizationEngine
    ) -> list[MethodOutcome]:
        result = engine.placebo_test(dataset)
        return [self._outcome(Effect.PSI, result.observed_stat, result.p_two_sided)]


class IvTwoStep(BaseMethod):
    __slots__ = ()
    name = Method.IV_TWO_STEP.value
    effects = (Effect.BETA,)

    def _evaluate(
        self, dataset: TrialDataset, truth: ParameterPoint, engine: RandomizationEngine
    ) -> list[MethodOutcome]:
        result = engine.treatment_test(dataset, adjusted=True)
        return [self._outcome(Effect.BETA, result.observed_stat, result.p_two_sided)]


class IvUnadjusted(BaseMethod):
    __slots__ = ()
    name = Method.IV_UNADJUSTED.value
    effects = (Effect.BETA,)

    def _evaluate(
        self, dataset: TrialDataset, truth: ParameterPoint, engine: RandomizationEngine
    ) -> list[MethodOutcome]:
        result = engine.treatment_test(dataset, adjusted=False)
        return [self._outcome(Effect.BETA, result.observed_stat, result.p_two_sided)]


class IvTruePsiAdjusted(BaseMethod):
    """Residuals use the simulated psi instead of psi-hat."""

    __slots__ = ()
    name = Method.IV_TRUE_PSI_ADJUSTED.value
    effects = (Effect.BETA,)

    def _evaluate(
        self, dataset: TrialDataset, truth: ParameterPoint, engine: RandomizationEngine
    ) -> list[MethodOutcome]:
        result = engine.treatment_test(dataset, psi=truth.psi)
        return [self._outcome(Effect.BETA, result.observed_stat, result.p_two_sided)]


class Ols(BaseMethod):
    """Y on (1, X, M), plus A when the dataset has it; classical t-tests."""

    __slots__ = ()
    name = Method.OLS.value
    effects = (Effect.PSI, Effect.BETA)

    def _evaluate(
        self, dataset: TrialDataset, truth: ParameterPoint, engine: RandomizationEngine
    ) -> list[MethodOutcome]:
        fit = estimators.ols_fit(dataset, include_mediator=dataset.extended)
        return [
            self._outcome(
                Effect.PSI,
                estimators.ols_estimate(fit, EstimateKind.OLS_PSI).value,
                fit.p_values["psi"],
            ),
            self._outcome(
                Effect.BETA,
                estimators.ols_estimate(fit, EstimateKind.OLS_BETA).value,
                fit.p_values["beta"],
            ),
        ]


class Pretest(BaseMethod):
    """Two-step IV when the placebo test rejects, unadjusted IV otherwise."""

    __slots__ = "_alpha"
    name = Method.PRETEST.value
    effects = (Effect.BETA,)

    def __init__(self, alpha_pretest: float = 0.05) -> None:
        self._alpha = alpha_pretest

    def _evaluate(
        self, dataset: TrialDataset, truth: ParameterPoint, engine: RandomizationEngine
    ) -> list[MethodOutcome]:
        estimate = estimators.pretest_strategy(dataset, self._alpha, engine)
        adjusted = estimate.branch == PretestBranch.TWO_STEP
        result = engine.treatment_test(dataset, adjusted=adjusted)
        return [self._outcome(Effect.BETA, estimate.value, result.p_two_sided)]


class MultiMediator(BaseMethod):
    __slots__ = ()
    name = Method.MULTI_MEDIATOR.value
    effects = (Effect.BETA,)
    requires_extended = True

    def _evaluate(
        self, dataset: TrialDataset, truth: ParameterPoint, engine: RandomizationEngine
    ) -> list[MethodOutcome]:
        result = engine.multi_mediator_test(dataset)
        return [self._outcome(Effect.BETA, result.observed_stat, result.p_two_sided)]


class MultiMediatorTrue(BaseMethod):
    __slots__ = ()
    name = Method.MULTI_MEDIATOR_TRUE.value
    effects = (Effect.BETA,)
    requires_extended = True

    def _evaluate(
        self, dataset: TrialDataset, truth: ParameterPoint, engine: RandomizationEngine
    ) -> list[MethodOutcome]:
        result = engine.multi_mediator_test(dataset, psi=truth.psi, kappa=truth.kappa)
        return [self._outcome(Effect.BETA, result.observed_stat, result.p_two_sided)]


def build(method: Method | str, alpha_pretest: float = 0.05) -> BaseMethod:
    method = Method(method)
    if method == Method.PRETEST:
        return Pretest(alpha_pretest)
    return {
        Method.IV_PLACEBO: IvPlacebo,
        Method.IV_TWO_STEP: IvTwoStep,
        Method.IV_UNADJUSTED: IvUnadjusted,
        Method.IV_TRUE_PSI_ADJUSTED: IvTruePsiAdjusted,
        Method.OLS: Ols,
        Method.MULTI_MEDIATOR: MultiMediator,
        Method.MULTI_MEDIATOR_TRUE: MultiMediatorTrue,
    }[method]()
