"""YAML configuration files for simulation and experiment commands."""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any
from typing import Union

import yaml
from pydantic import BaseModel
from pydantic import ValidationError
from pydantic import conlist
from pydantic import root_validator

from . import errors
from . import simulator
from . import utils
from .harness import ExperimentPlan
from .model import PlaceboConfig
from .simulator import ParameterPoint
from .simulator import ScenarioConfig


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

BUNDLED_DIR = Path(__file__).parent / "plans"
SUFFIX = ".yaml"


class SimulationConfig(BaseModel):
    """``point`` may be given as ``{n: ..., uniform: value}`` to set every coefficient."""

    scenario: ScenarioConfig
    point: ParameterPoint

    class Config(PlaceboConfig):
        allow_mutation = False

    @root_validator(pre=True)
    def expand_uniform(cls, values: dict[str, Any]) -> dict[str, Any]:
        point = values.get("point")
        if isinstance(point, dict) and "uniform" in point:
            overrides = dict(point)
            value = overrides.pop("uniform")
            scenario = values.get("scenario")
            extended = isinstance(scenario, dict) and bool(scenario.get("extended_mediator"))
            names = [
                name
                for name in ParameterPoint.__fields__
                if name != "n" and (extended or name not in simulator.EXTENDED_LOADINGS)
            ]
            values["point"] = {**{name: value for name in names}, **overrides}
        return values


class ExperimentSuite(BaseModel):
    experiments: conlist(ExperimentPlan, min_items=1)

    class Config(PlaceboConfig):
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def unique_names(cls, values: dict[str, Any]) -> dict[str, Any]:
        names = [plan.name for plan in values["experiments"]]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"experiment names must be unique; repeated: {duplicates}")
        return values


def problems(error: ValidationError) -> list[str]:
    """One ``field.path: message`` line per pydantic error."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return lines


def bundled(name: str) -> Path:
    return BUNDLED_DIR / f"{name}{SUFFIX}"


def bundled_names() -> list[str]:
    return sorted(path.stem for path in BUNDLED_DIR.glob(f"*{SUFFIX}"))


def resolve(source: PathLike) -> Path:
    """A path on disk, or the name of a bundled plan such as ``paper_suite``."""
    path = Path(source)
    if path.exists():
        return path
    if bundled(str(source)).exists():
        return bundled(str(source))
    raise FileNotFoundError(
        f"No such file or bundled plan: '{source}' (bundled: {', '.join(bundled_names())})"
    )


def load_yaml(source: PathLike) -> Any:
    path = resolve(source)
    try:
        with open(path, encoding="utf-8") as stream:
            content = yaml.safe_load(stream)
    except yaml.YAMLError as error:
        raise errors.PlanValidationError(str(path), [str(error)]) from error
    if not isinstance(content, dict):
        raise errors.PlanValidationError(str(path), ["<root>: expected a mapping"])
    logger.debug("Loaded %s", path)
    return content


def parse_simulation(content: Any, source: str = "simulation config") -> SimulationConfig:
    try:
        config = SimulationConfig.parse_obj(content)
    except ValidationError as error:
        raise errors.PlanValidationError(source, problems(error)) from error
    simulator.check_constraints(config.scenario, config.point)
    return config


def load_simulation(source: PathLike) -> SimulationConfig:
    return parse_simulation(load_yaml(source), str(source))


def parse_plans(content: Any, source: str = "experiment plan") -> list[ExperimentPlan]:
    """A single plan, or a suite ``{experiments: [plan, ...]}``."""
    try:
        if isinstance(content, dict) and "experiments" in content:
            return list(ExperimentSuite.parse_obj(content).experiments)
        return [ExperimentPlan.parse_obj(content)]
    except ValidationError as error:
        raise errors.PlanValidationError(source, problems(error)) from error


def load_plans(source: PathLike) -> list[ExperimentPlan]:
    return parse_plans(load_yaml(source), str(source))


def dump_plans(plans: list[ExperimentPlan]) -> str:
    content = {"experiments": [utils.loads(plan.json()) for plan in plans]}
    return yaml.safe_dump(content, sort_keys=False)
