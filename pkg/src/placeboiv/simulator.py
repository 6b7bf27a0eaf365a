"""Synthetic trials from the blinded/unblinded x confounded/unconfounded models.

All intercepts are 0 and every noise term is Normal(0, 1). X, E and D follow
threshold models ``1{linear predictor > 0}``; M, A and Y are linear.
"""
from __future__ import annotations

import logging
from typing import Any
from typing import Iterable
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel
from pydantic import Field
from pydantic import conint

from . import errors
from . import rng
from .data import MIN_PARTICIPANTS
from .data import TrialDataset
from .design import Design
from .design import Dimension
from .model import PlaceboConfig


logger = logging.getLogger(__name__)

# Every confounder loading, main model first. Order is stable for designs.
CONFOUNDER_LOADINGS = (
    "theta_XU",
    "theta_XC1",
    "theta_XC2",
    "theta_XC3",
    "theta_EC1",
    "theta_EL1",
    "theta_EV2",
    "theta_EL3",
    "theta_DV1",
    "theta_DC2",
    "theta_DL2",
    "theta_DL3",
    "theta_ML1",
    "theta_ML2",
    "theta_MC3",
    "theta_MV3",
    "theta_YU",
    "theta_YV1",
    "theta_YV2",
    "theta_YV3",
)
EXTENDED_CONFOUNDER_LOADINGS = ("theta_XC4", "theta_AC4", "theta_AV4", "theta_YV4")
EXTENDED_LOADINGS = ("theta_AW", "theta_AX", "kappa") + EXTENDED_CONFOUNDER_LOADINGS
EXTENDED_VARIABLES = ("w", "c4", "v4", "eps_a")
INSTRUMENT_LOADINGS = ("theta_XZ", "theta_DQ", "theta_ME", "theta_MD", "theta_MI")
SAMPLE_SIZE_RANGE = (100, 1000)
POSITIVE_RANGE = (1.0, 2.0)
SIGNED_RANGE = (-2.0, 2.0)

PANELS = {
    (True, True): "a",
    (False, True): "b",
    (True, False): "c",
    (False, False): "d",
}


class ScenarioConfig(BaseModel):
    blinded: bool
    confounded: bool
    psi_null: bool
    beta_null: bool
    extended_mediator: bool = False

    class Config(PlaceboConfig):
        allow_mutation = False

    @property
    def panel(self) -> str:
        return PANELS[(self.blinded, self.confounded)]

    @property
    def name(self) -> str:
        return "_".join(
            (
                "blinded" if self.blinded else "unblinded",
                "confounded" if self.confounded else "unconfounded",
                "psi0" if self.psi_null else "psi1",
                "beta0" if self.beta_null else "beta1",
            )
        ) + ("_extended" if self.extended_mediator else "")


class ParameterPoint(BaseModel):
    """Structural coefficients; ``beta`` is theta_YX and ``psi`` is theta_YM."""

    n: conint(ge=MIN_PARTICIPANTS)
    theta_XZ: float = 0.0
    theta_DQ: float = 0.0
    theta_ME: float = 0.0
    theta_MD: float = 0.0
    theta_MI: float = 0.0
    theta_EX: float = 0.0
    beta: float = Field(0.0, alias="theta_YX")
    psi: float = Field(0.0, alias="theta_YM")
    theta_XU: float = 0.0
    theta_XC1: float = 0.0
    theta_XC2: float = 0.0
    theta_XC3: float = 0.0
    theta_EC1: float = 0.0
    theta_EL1: float = 0.0
    theta_EV2: float = 0.0
    theta_EL3: float = 0.0
    theta_DV1: float = 0.0
    theta_DC2: float = 0.0
    theta_DL2: float = 0.0
    theta_DL3: float = 0.0
    theta_ML1: float = 0.0
    theta_ML2: float = 0.0
    theta_MC3: float = 0.0
    theta_MV3: float = 0.0
    theta_YU: float = 0.0
    theta_YV1: float = 0.0
    theta_YV2: float = 0.0
    theta_YV3: float = 0.0
    theta_AW: float = 0.0
    theta_AX: float = 0.0
    kappa: float = Field(0.0, alias="theta_YA")
    theta_XC4: float = 0.0
    theta_AC4: float = 0.0
    theta_AV4: float = 0.0
    theta_YV4: float = 0.0

    class Config(PlaceboConfig):
        allow_mutation = False

    @classmethod
    def uniform(cls, n: int, value: float = 1.0, extended: bool = False) -> ParameterPoint:
        """Every coefficient set to ``value``."""
        names = [name for name in cls.__fields__ if name != "n"]
        if not extended:
            names = [name for name in names if name not in EXTENDED_LOADINGS]
        return cls(n=n, **{name: value for name in names})


class TrueEffects(NamedTuple):
    psi: float
    beta: float


def check_constraints(config: ScenarioConfig, point: ParameterPoint) -> ParameterPoint:
    """Raise if a coefficient the scenario fixes at zero is nonzero."""
    forced: dict[str, str] = {}
    if config.blinded:
        forced["theta_EX"] = "blinded trials have no X -> E path"
        if config.extended_mediator:
            forced["theta_AX"] = "blinded trials have no X -> A path"
    if not config.confounded:
        for name in CONFOUNDER_LOADINGS + EXTENDED_CONFOUNDER_LOADINGS:
            forced[name] = "unconfounded scenarios have no confounder loadings"
    if config.psi_null:
        forced["psi"] = "psi is 0 under the placebo null"
    if config.beta_null:
        forced["beta"] = "beta is 0 under the treatment null"
    if not config.extended_mediator:
        for name in EXTENDED_LOADINGS:
            forced.setdefault(name, "the A mediator is only part of the extended model")
    offending = [name for name in forced if getattr(point, name) != 0]
    if offending:
        reasons = sorted({forced[name] for name in offending})
        raise errors.ConstraintViolationError(offending, "; ".join(reasons))
    return point


def _bernoulli(generator: np.random.Generator, n: int) -> np.ndarray:
    return (generator.random(n) < 0.5).astype(np.float64)


def _threshold(predictor: np.ndarray) -> np.ndarray:
    return (predictor > 0).astype(np.float64)


def _draw(seed: int, n: int, variables: Iterable[str]) -> dict[str, np.ndarray]:
    draws = {}
    for variable in variables:
        generator = rng.generator(seed, rng.variable_tag(variable))
        if variable in ("z", "q", "w"):
            draws[variable] = _bernoulli(generator, n)
        else:
            draws[variable] = generator.standard_normal(n)
    return draws


def _structural(point: ParameterPoint, seed: int, extended: bool) -> dict[str, Any]:
    variables = [
        name for name in rng.VARIABLES if extended or name not in EXTENDED_VARIABLES
    ]
    v = _draw(seed, point.n, variables)
    p = point
    x = _threshold(
        p.theta_XZ * v["z"]
        + p.theta_XU * v["u"]
        + p.theta_XC1 * v["c1"]
        + p.theta_XC2 * v["c2"]
        + p.theta_XC3 * v["c3"]
        + (p.theta_XC4 * v["c4"] if extended else 0.0)
        + v["eps_x"]
    )
    e = _threshold(
        p.theta_EX * x
        + p.theta_EC1 * v["c1"]
        + p.theta_EL1 * v["l1"]
        + p.theta_EV2 * v["v2"]
        + p.theta_EL3 * v["l3"]
        + v["eps_e"]
    )
    d = _threshold(
        p.theta_DQ * v["q"]
        + p.theta_DV1 * v["v1"]
        + p.theta_DC2 * v["c2"]
        + p.theta_DL2 * v["l2"]
        + p.theta_DL3 * v["l3"]
        + v["eps_d"]
    )
    i = e * d
    m = (
        p.theta_ME * e
        + p.theta_MD * d
        + p.theta_MI * i
        + p.theta_ML1 * v["l1"]
        + p.theta_ML2 * v["l2"]
        + p.theta_MC3 * v["c3"]
        + p.theta_MV3 * v["v3"]
        + v["eps_m"]
    )
    y = (
        p.beta * x
        + p.psi * m
        + p.theta_YU * v["u"]
        + p.theta_YV1 * v["v1"]
        + p.theta_YV2 * v["v2"]
        + p.theta_YV3 * v["v3"]
        + v["eps_y"]
    )
    columns: dict[str, Any] = dict(z=v["z"], q=v["q"], x=x, e=e, d=d, i=i, m=m, y=y)
    if extended:
        a = (
            p.theta_AW * v["w"]
            + p.theta_AX * x
            + p.theta_AC4 * v["c4"]
            + p.theta_AV4 * v["v4"]
            + v["eps_a"]
        )
        columns.update(a=a, w=v["w"], y=y + p.kappa * a + p.theta_YV4 * v["v4"])
    return columns


def generate(config: ScenarioConfig, point: ParameterPoint, seed: int) -> TrialDataset:
    """Draw one dataset; a pure function of ``(config, point, seed)``."""
    check_constraints(config, point)
    if config.extended_mediator:
        return generate_extended(config, point, seed)
    return TrialDataset(**_structural(point, seed, extended=False))


def generate_extended(config: ScenarioConfig, point: ParameterPoint, seed: int) -> TrialDataset:
    """As :func:`generate`, adding instrument W and mediator A with Y gaining kappa * A."""
    if not config.extended_mediator:
        raise errors.ConstraintViolationError(
            ["extended_mediator"], "the extended model needs extended_mediator = true"
        )
    check_constraints(config, point)
    return TrialDataset(**_structural(point, seed, extended=True))


def oracle_effects(point: ParameterPoint) -> TrueEffects:
    return TrueEffects(psi=point.psi, beta=point.beta)


def parameter_space(
    config: ScenarioConfig, n_range: tuple[int, int] = SAMPLE_SIZE_RANGE
) -> list[Dimension]:
    """Design dimensions for every coefficient the scenario leaves free.

    A degenerate ``n_range`` (equal bounds) drops the sample-size dimension.
    """
    low, high = n_range
    dimensions = []
    if low != high:
        dimensions.append(Dimension(name="n", lower=low, upper=high, integer=True))

    def add(name: str, bounds: tuple[float, float]) -> None:
        dimensions.append(Dimension(name=name, lower=bounds[0], upper=bounds[1]))

    for name in INSTRUMENT_LOADINGS:
        add(name, POSITIVE_RANGE)
    if not config.blinded:
        add("theta_EX", POSITIVE_RANGE)
    if not config.beta_null:
        add("beta", SIGNED_RANGE)
    if not config.psi_null:
        add("psi", SIGNED_RANGE)
    if config.confounded:
        for name in CONFOUNDER_LOADINGS:
            add(name, SIGNED_RANGE)
    if config.extended_mediator:
        add("theta_AW", POSITIVE_RANGE)
        if not config.blinded:
            add("theta_AX", POSITIVE_RANGE)
        add("kappa", SIGNED_RANGE)
        if config.confounded:
            for name in EXTENDED_CONFOUNDER_LOADINGS:
                add(name, SIGNED_RANGE)
    return dimensions


def points_from_design(design: Design, **fixed: float) -> list[ParameterPoint]:
    """One point per design row; ``fixed`` supplies values the design leaves out."""
    points = []
    for row in design.rows():
        values = {**fixed, **row}
        values["n"] = int(values["n"])
        points.append(ParameterPoint(**values))
    return points
