from __future__ import annotations

import abc
import functools
import math
from typing import Any
from typing import Callable
from typing import ClassVar
from typing import Iterable
from typing import Iterator
from typing import TypeVar

from . import errors
from . import utils
from .data import TrialDataset
from .model import Effect
from .model import MethodOutcome


T = TypeVar("T")
R = TypeVar("R")


def captures_estimation_errors(method: Callable) -> Callable:
    """Turn estimation and inference failures into marked outcomes."""

    @functools.wraps(method)
    def wrapper(self: BaseMethod, *args, **kwargs) -> list[MethodOutcome]:
        try:
            return method(self, *args, **kwargs)
        except (errors.EstimationError, errors.InferenceError) as error:
            return [
                MethodOutcome(method=self.name, effect=effect, error=type(error).__name__)
                for effect in self.effects
            ]

    return wrapper


class BaseMethod(abc.ABC):
    """One analysis strategy evaluated on every replicate of an experiment."""

    __slots__ = ()

    name: ClassVar[str]
    effects: ClassVar[tuple[Effect, ...]]
    requires_extended: ClassVar[bool] = False

    @captures_estimation_errors
    def evaluate(self, dataset: TrialDataset, truth: Any, engine: Any) -> list[MethodOutcome]:
        return self._evaluate(dataset, truth, engine)

    @abc.abstractmethod
    def _evaluate(self, dataset: TrialDataset, truth: Any, engine: Any) -> list[MethodOutcome]:
        pass

    def _outcome(self, effect: Effect, estimate: float, p_value: float) -> MethodOutcome:
        if not (math.isfinite(estimate) and math.isfinite(p_value)):
            return MethodOutcome(method=self.name, effect=effect, error="NonFiniteResult")
        return MethodOutcome(method=self.name, effect=effect, estimate=estimate, p_value=p_value)

    def __repr__(self) -> str:
        return utils.to_str(self, name=self.name)


class BaseExecutor(abc.ABC):
    """Ordered map over independent work units."""

    __slots__ = ()

    @abc.abstractmethod
    def map(self, function: Callable[[T], R], items: Iterable[T]) -> Iterator[R]:
        pass

    def close(self) -> None:
        pass

    def __enter__(self) -> BaseExecutor:
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()
