import datetime
from abc import ABC
from enum import Enum
from typing import Any
from typing import Optional

import numpy as np
from pydantic import BaseConfig
from pydantic import BaseModel
from pydantic import Field
from pydantic import NonNegativeInt
from pydantic import PositiveInt
from pydantic import confloat
from pydantic import root_validator

from . import utils


Probability = confloat(ge=0.0, le=1.0)


class PlaceboConfig(BaseConfig):
    allow_population_by_field_name = True
    use_enum_values = True
    json_dumps = utils.dumps
    json_loads = utils.loads
    json_encoders = {np.ndarray: lambda a: a.tolist()}


class BaseResultModel(BaseModel, ABC):
    class Config(PlaceboConfig):
        allow_mutation = False
        arbitrary_types_allowed = True


class Effect(str, Enum):
    PSI = "psi"
    BETA = "beta"


class EstimateKind(str, Enum):
    PLACEBO_IV = "placebo_iv"
    TREATMENT_IV_TWO_STEP = "treatment_iv_two_step"
    TREATMENT_IV_UNADJUSTED = "treatment_iv_unadjusted"
    TREATMENT_IV_MULTI_MEDIATOR = "treatment_iv_multi_mediator"
    ITT_PSI = "itt_psi"
    ITT_BETA = "itt_beta"
    OLS_PSI = "ols_psi"
    OLS_BETA = "ols_beta"
    KAPPA_IV = "kappa_iv"


class EffectEstimate(BaseResultModel):
    value: float
    numerator: float
    denominator: float
    kind: EstimateKind


class PretestBranch(str, Enum):
    TWO_STEP = "two_step"
    UNADJUSTED = "unadjusted"


class PretestEstimate(EffectEstimate):
    branch: PretestBranch
    pretest_p_value: Probability
    alpha_pretest: Probability


class MultiMediatorEstimate(BaseResultModel):
    psi: EffectEstimate
    kappa: EffectEstimate
    beta: EffectEstimate


class RegressionFit(BaseResultModel):
    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    t_statistics: dict[str, float]
    p_values: dict[str, float]
    df_resid: NonNegativeInt
    r_squared: float


class Residuals(BaseResultModel):
    values: np.ndarray
    adjusted_by: str


class Diagnostics(BaseResultModel):
    """Instrument strength and desire-expectation checks; None marks undefined."""

    cor_qm: Optional[float]
    cor_zx: Optional[float]
    cor_qd: Optional[float]
    desire_expectation_fit: Optional[RegressionFit]

    def weak_instruments(self, threshold: float = 0.1) -> list[str]:
        weak = []
        for name in ("cor_qm", "cor_zx", "cor_qd"):
            value = getattr(self, name)
            if value is None or abs(value) < threshold:
                weak.append(name)
        return weak


class Side(str, Enum):
    GREATER = "greater"
    LESS = "less"
    TWO_SIDED = "two_sided"


class RandTestResult(BaseResultModel):
    statistic: str
    observed_stat: float
    n_permutations: PositiveInt
    p_two_sided: Probability
    p_greater: Probability
    p_less: Probability
    p_equal_tailed: Probability
    null_quantiles: dict[str, float]
    seed: NonNegativeInt
    two_sided_rule: str = "absolute"

    @property
    def floor(self) -> float:
        return 1.0 / (self.n_permutations + 1)

    def p_value(self, side: Side = Side.TWO_SIDED) -> float:
        return {
            Side.GREATER: self.p_greater,
            Side.LESS: self.p_less,
            Side.TWO_SIDED: self.p_two_sided,
        }[Side(side)]


class ProfileSide(str, Enum):
    LOWER = "lower"
    UPPER = "upper"


class ProfilePoint(BaseResultModel):
    theta: float
    p_one_sided: Probability
    side: ProfileSide


class PvalueProfile(BaseResultModel):
    effect: Effect
    estimate: float
    grid_step: float
    scale: float = Field(description="K1 for psi, K2 for beta")
    n_permutations: PositiveInt
    seed: NonNegativeInt
    grid: list[ProfilePoint]

    @property
    def floor(self) -> float:
        return 1.0 / (self.n_permutations + 1)

    def points(self, side: ProfileSide) -> list[ProfilePoint]:
        return [point for point in self.grid if point.side == ProfileSide(side)]


class RandCI(BaseResultModel):
    level: float
    alpha: confloat(gt=0.0, lt=0.5)
    lower: float
    upper: float
    estimate: float

    @root_validator(skip_on_failure=True)
    def check_bounds(cls, values: dict[str, Any]) -> dict[str, Any]:
        if abs(values["level"] - (1 - 2 * values["alpha"])) > 1e-12:
            raise ValueError("'level' must equal 1 - 2 * alpha")
        if not values["lower"] <= values["estimate"] <= values["upper"]:
            raise ValueError("interval must contain the estimate")
        return values

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


class MethodOutcome(BaseResultModel):
    """Estimate and two-sided p-value of one method on one replicate.

    ``error`` names the exception when the method could not be evaluated.
    """

    method: str
    effect: Effect
    estimate: Optional[float] = None
    p_value: Optional[Probability] = None
    error: Optional[str] = None

    @property
    def degenerate(self) -> bool:
        return self.error is not None


class RunManifest(BaseResultModel):
    run_id: str = Field(default_factory=utils.uid)
    command: list[str]
    config_digest: Optional[str]
    master_seed: NonNegativeInt
    version: str
    started: datetime.datetime
    finished: Optional[datetime.datetime]
    outputs: list[str] = []
