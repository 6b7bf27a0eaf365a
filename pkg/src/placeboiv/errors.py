from __future__ import annotations

from typing import Any
from typing import Generic
from typing import Iterable
from typing import Optional
from typing import TypeVar


class PlaceboIVError(Exception):
    pass


class DataError(PlaceboIVError):
    pass


class DatasetParseError(DataError):
    def __init__(self, message: str, column: str | None = None, row: int | None = None):
        super().__init__(message)
        self.column = column
        self.row = row


class DatasetValidationError(DataError):
    def __init__(self, issues: Iterable[Any]):
        self.issues = list(issues)
        lines = "\n".join(f"  {issue}" for issue in self.issues)
        super().__init__(f"Dataset failed validation with {len(self.issues)} issue(s):\n{lines}")


class EstimationError(PlaceboIVError):
    pass


class DegenerateInstrumentError(EstimationError):
    def __init__(self, covariance: str, value: float):
        super().__init__(
            f"Degenerate instrument: |{covariance}| = {abs(value):.3g} is below the "
            "degeneracy tolerance"
        )
        self.covariance = covariance
        self.value = value


class EmptyArmError(EstimationError):
    def __init__(self, instrument: str, arm: int):
        super().__init__(f"Instrument '{instrument}' has no participants in arm {arm}")
        self.instrument = instrument
        self.arm = arm


class RankDeficientError(EstimationError):
    def __init__(self, columns: Iterable[str]):
        self.columns = list(columns)
        super().__init__(f"Design matrix on {self.columns} is not of full column rank")


class LengthMismatchError(EstimationError):
    pass


class MissingColumnError(EstimationError):
    def __init__(self, column: str):
        super().__init__(f"Dataset has no '{column}' column")
        self.column = column


class InferenceError(PlaceboIVError):
    pass


class ProfileTooNarrowError(InferenceError):
    def __init__(self, side: str, alpha: float):
        super().__init__(f"p-value profile never reaches alpha={alpha} on the {side} side")
        self.side = side
        self.alpha = alpha


class ConfigError(PlaceboIVError):
    pass


class ConstraintViolationError(ConfigError):
    def __init__(self, fields: Iterable[str], reason: str):
        self.fields = list(fields)
        super().__init__(f"{reason}: {', '.join(self.fields)}")


class PlanValidationError(ConfigError):
    def __init__(self, source: str, problems: Iterable[str]):
        self.problems = list(problems)
        lines = "\n".join(f"  {problem}" for problem in self.problems)
        super().__init__(f"Invalid {source}:\n{lines}")


E = TypeVar("E", bound=BaseException)


class ErrorMapping(Generic[E]):
    """Resolves an exception type to an integer code along its MRO."""

    __slots__ = "_default", "_codes"

    def __init__(self, builder: ErrorMapping.Builder[E]):
        self._default = builder.default
        self._codes = dict(builder.codes)

    @classmethod
    def builder(cls, default: int) -> ErrorMapping.Builder[E]:
        return ErrorMapping.Builder(default)

    def get(self, error: type[E] | E) -> int:
        etype = error if isinstance(error, type) else type(error)
        for klass in etype.__mro__:
            if klass in self._codes:
                return self._codes[klass]
        return self._default

    def default(self) -> int:
        return self._default

    class Builder(Generic[E]):
        __slots__ = "default", "codes"

        def __init__(self, default: int):
            self.default = default
            self.codes: dict[type, int] = {}

        def put(self, error: type[E], code: int) -> ErrorMapping.Builder[E]:
            if code == 0:
                raise ValueError("Exit code 0 is reserved for success")
            self.codes[error] = code
            return self

        def put_all(self, mapping: ErrorMapping[E]) -> ErrorMapping.Builder[E]:
            self.codes.update(mapping._codes)
            return self

        def build(self) -> ErrorMapping[E]:
            return ErrorMapping(self)


EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_VALIDATION = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4

validation_codes = (
    ErrorMapping.builder(EXIT_VALIDATION)
    .put(DataError, EXIT_VALIDATION)
    .put(ConfigError, EXIT_VALIDATION)
    .put(ValueError, EXIT_VALIDATION)
    .build()
)

exit_codes: ErrorMapping[BaseException] = (
    ErrorMapping.builder(EXIT_UNEXPECTED)
    .put_all(validation_codes)
    .put(EstimationError, EXIT_DEGENERATE)
    .put(InferenceError, EXIT_DEGENERATE)
    .put(OSError, EXIT_IO)
    .build()
)


def find_exit_code(error: BaseException, mapping: Optional[ErrorMapping] = None) -> int:
    return (mapping or exit_codes).get(error)
