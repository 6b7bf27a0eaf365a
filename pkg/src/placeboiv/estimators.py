"""Point estimators for placebo (psi) and treatment (beta) effects.

All covariances use the moment form with divisor n. Every function is a pure
function of the dataset.
"""
from __future__ import annotations

import functools
import logging
from typing import Callable
from typing import Iterable
from typing import Optional
from typing import Sequence
from typing import TypeVar

import numpy as np
import statsmodels.api as sm

from . import errors
from .data import TrialDataset
from .model import Diagnostics
from .model import EffectEstimate
from .model import EstimateKind
from .model import MultiMediatorEstimate
from .model import PretestBranch
from .model import PretestEstimate
from .model import RegressionFit
from .model import Residuals


logger = logging.getLogger(__name__)

DEGENERACY_TOLERANCE = 1e-10
EPSILON = np.finfo(np.float64).eps

F = TypeVar("F", bound=Callable)


def requires_extended(function: F) -> F:
    @functools.wraps(function)
    def wrapper(dataset: TrialDataset, *args, **kwargs):
        for column in ("a", "w"):
            if getattr(dataset, column) is None:
                raise errors.MissingColumnError(column)
        return function(dataset, *args, **kwargs)

    return wrapper  # type: ignore[return-value]


def sample_cov(u: np.ndarray, v: np.ndarray) -> float:
    """(1/n) sum(u v) - mean(u) mean(v), evaluated in centered form."""
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise errors.LengthMismatchError(f"Lengths differ: {u.size} != {v.size}")
    if u.size < 2:
        raise errors.LengthMismatchError("At least 2 observations are required")
    return float(np.mean((u - u.mean()) * (v - v.mean())))


def sample_var(u: np.ndarray) -> float:
    return sample_cov(u, u)


def is_degenerate(covariance: float, u: np.ndarray, v: np.ndarray) -> bool:
    scale = float(np.std(u) * np.std(v))
    return abs(covariance) <= DEGENERACY_TOLERANCE * (scale + EPSILON)


def _guarded_cov(u: np.ndarray, v: np.ndarray, name: str) -> float:
    covariance = sample_cov(u, v)
    if is_degenerate(covariance, u, v):
        raise errors.DegenerateInstrumentError(name, covariance)
    return covariance


def _iv_ratio(
    instrument: np.ndarray,
    response: np.ndarray,
    target: np.ndarray,
    kind: EstimateKind,
    name: str,
) -> EffectEstimate:
    denominator = _guarded_cov(instrument, target, name)
    numerator = sample_cov(instrument, response)
    return EffectEstimate(
        value=numerator / denominator,
        numerator=numerator,
        denominator=denominator,
        kind=kind,
    )


def placebo_iv(dataset: TrialDataset) -> EffectEstimate:
    return _iv_ratio(dataset.q, dataset.y, dataset.m, EstimateKind.PLACEBO_IV, "cov(Q,M)")


def placebo_residuals(dataset: TrialDataset, psi_hat: float) -> Residuals:
    return Residuals(values=dataset.y - psi_hat * dataset.m, adjusted_by="placebo term")


def treatment_iv_on(
    dataset: TrialDataset, response: np.ndarray, kind: EstimateKind
) -> EffectEstimate:
    return _iv_ratio(dataset.z, response, dataset.x, kind, "cov(Z,X)")


def treatment_iv_two_step(dataset: TrialDataset) -> EffectEstimate:
    psi = placebo_iv(dataset)
    residuals = placebo_residuals(dataset, psi.value)
    return treatment_iv_on(dataset, residuals.values, EstimateKind.TREATMENT_IV_TWO_STEP)


def treatment_iv_unadjusted(dataset: TrialDataset) -> EffectEstimate:
    return treatment_iv_on(dataset, dataset.y, EstimateKind.TREATMENT_IV_UNADJUSTED)


def group_difference(response: np.ndarray, arm: np.ndarray, instrument: str) -> float:
    treated = arm == 1
    for value, members in ((0, ~treated), (1, treated)):
        if not members.any():
            raise errors.EmptyArmError(instrument, value)
    return float(response[treated].mean() - response[~treated].mean())


def _itt(response: np.ndarray, arm: np.ndarray, instrument: str, kind: EstimateKind):
    value = group_difference(response, arm, instrument)
    return EffectEstimate(
        value=value,
        numerator=sample_cov(arm, response),
        denominator=sample_var(arm),
        kind=kind,
    )


def itt_psi(dataset: TrialDataset) -> EffectEstimate:
    return _itt(dataset.y, dataset.q, "q", EstimateKind.ITT_PSI)


def itt_beta(dataset: TrialDataset, residuals: Residuals) -> EffectEstimate:
    return _itt(residuals.values, dataset.z, "z", EstimateKind.ITT_BETA)


def scale_factor(instrument: np.ndarray, target: np.ndarray) -> float:
    """K = cov(instrument, target) / var(instrument); invariant under response shuffles."""
    return sample_cov(instrument, target) / sample_var(instrument)


def _design(columns: Sequence[np.ndarray]) -> np.ndarray:
    return np.column_stack([np.ones_like(columns[0])] + list(columns))


def _fit(response: np.ndarray, columns: dict[str, np.ndarray]):
    design = _design(list(columns.values()))
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise errors.RankDeficientError(["intercept"] + list(columns))
    return sm.OLS(response, design).fit()


def _regression_fit(results, names: Iterable[str]) -> RegressionFit:
    names = list(names)

    def named(values: np.ndarray) -> dict[str, float]:
        return {name: float(value) for name, value in zip(names, values)}

    return RegressionFit(
        coefficients=named(results.params),
        standard_errors=named(results.bse),
        t_statistics=named(results.tvalues),
        p_values=named(results.pvalues),
        df_resid=int(results.df_resid),
        r_squared=float(results.rsquared),
    )


def ols_fit(dataset: TrialDataset, include_mediator: bool = False) -> RegressionFit:
    """Y on (1, X, M[, A]) by least squares with classical t-tests."""
    columns = {"beta": dataset.x, "psi": dataset.m}
    if include_mediator:
        if dataset.a is None:
            raise errors.MissingColumnError("a")
        columns["kappa"] = dataset.a
    results = _fit(dataset.y, columns)
    return _regression_fit(results, ["intercept"] + list(columns))


def ols_estimate(fit: RegressionFit, kind: EstimateKind) -> EffectEstimate:
    term = "psi" if kind == EstimateKind.OLS_PSI else "beta"
    return EffectEstimate(
        value=fit.coefficients[term],
        numerator=fit.coefficients[term],
        denominator=1.0,
        kind=kind,
    )


def residualize_on_covariates(
    dataset: TrialDataset,
    targets: Iterable[str],
    covariates: Optional[Iterable[str]] = None,
) -> dict[str, Residuals]:
    names = list(dataset.covariates) if covariates is None else list(covariates)
    for name in names:
        if name not in dataset.covariates:
            raise errors.MissingColumnError(name)
    matrix = {name: dataset.covariates[name] for name in names}
    residuals = {}
    for target in targets:
        column = getattr(dataset, target, None)
        if column is None:
            raise errors.MissingColumnError(target)
        if matrix:
            values = _fit(column, matrix).resid
        else:
            values = column - column.mean()
        residuals[target] = Residuals(
            values=np.asarray(values, dtype=np.float64),
            adjusted_by=f"covariates {names}",
        )
    return residuals


def adjust_for_covariates(
    dataset: TrialDataset,
    targets: Iterable[str] = ("x", "y"),
    covariates: Optional[Iterable[str]] = None,
) -> TrialDataset:
    """Dataset whose target columns are replaced by their covariate residuals.

    The result is meant for the estimators and tests only; residualized binary
    columns no longer satisfy the CSV invariants.
    """
    residuals = residualize_on_covariates(dataset, targets, covariates)
    return dataset.replace(**{name: r.values for name, r in residuals.items()})


@requires_extended
def kappa_iv(dataset: TrialDataset) -> EffectEstimate:
    return _iv_ratio(dataset.w, dataset.y, dataset.a, EstimateKind.KAPPA_IV, "cov(W,A)")


def multi_mediator_residuals(
    dataset: TrialDataset, psi_hat: float, kappa_hat: float
) -> Residuals:
    return Residuals(
        values=dataset.y - psi_hat * dataset.m - kappa_hat * dataset.a,
        adjusted_by="placebo and mediator terms",
    )


@requires_extended
def multi_mediator_two_step(dataset: TrialDataset) -> MultiMediatorEstimate:
    psi = placebo_iv(dataset)
    kappa = kappa_iv(dataset)
    residuals = multi_mediator_residuals(dataset, psi.value, kappa.value)
    beta = treatment_iv_on(dataset, residuals.values, EstimateKind.TREATMENT_IV_MULTI_MEDIATOR)
    return MultiMediatorEstimate(psi=psi, kappa=kappa, beta=beta)


def _correlation(u: np.ndarray, v: np.ndarray) -> Optional[float]:
    if np.std(u) == 0 or np.std(v) == 0:
        return None
    return float(np.corrcoef(u, v)[0, 1])


def diagnostics(dataset: TrialDataset) -> Diagnostics:
    try:
        fit = _regression_fit(
            _fit(dataset.m, {"e": dataset.e, "d": dataset.d, "i": dataset.i}),
            ["intercept", "e", "d", "i"],
        )
    except errors.RankDeficientError:
        fit = None
    return Diagnostics(
        cor_qm=_correlation(dataset.q, dataset.m),
        cor_zx=_correlation(dataset.z, dataset.x),
        cor_qd=_correlation(dataset.q, dataset.d),
        desire_expectation_fit=fit,
    )


def pretest_strategy(dataset: TrialDataset, alpha_pretest: float, engine) -> PretestEstimate:
    """Two-step estimate if the placebo test rejects psi = 0, else the unadjusted one.

    ``engine`` is a :class:`placeboiv.inference.RandomizationEngine`.
    """
    if not 0.0 <= alpha_pretest <= 1.0:
        raise ValueError(f"'alpha_pretest' must be in [0, 1]; got {alpha_pretest}")
    pretest = engine.placebo_test(dataset)
    if pretest.p_two_sided < alpha_pretest:
        branch, estimate = PretestBranch.TWO_STEP, treatment_iv_two_step(dataset)
    else:
        branch, estimate = PretestBranch.UNADJUSTED, treatment_iv_unadjusted(dataset)
    logger.debug("Pretest p=%.4g chose the %s estimator", pretest.p_two_sided, branch.value)
    return PretestEstimate(
        **estimate.dict(),
        branch=branch,
        pretest_p_value=pretest.p_two_sided,
        alpha_pretest=alpha_pretest,
    )
