"""Trial dataset model, invariant checks and the CSV interchange format."""
from __future__ import annotations

import logging
import os
from enum import Enum
from typing import Any
from typing import Iterable
from typing import Optional
from typing import Union

import numpy as np
import pandas as pd
from pydantic import BaseModel
from pydantic import validator

from . import errors
from .model import PlaceboConfig


logger = logging.getLogger(__name__)

MIN_PARTICIPANTS = 4
REQUIRED_COLUMNS = ("z", "q", "x", "e", "d", "i", "m", "y")
OPTIONAL_COLUMNS = ("a", "w")
BINARY_COLUMNS = ("z", "q", "x", "e", "d", "w")
COVARIATE_PREFIX = "c_"

PathLike = Union[str, "os.PathLike[str]"]


class IssueKind(str, Enum):
    LENGTH_MISMATCH = "length_mismatch"
    NON_BINARY = "non_binary"
    BROKEN_INTERACTION = "broken_interaction"
    NON_FINITE = "non_finite"
    TOO_SMALL = "too_small"


class DatasetIssue(BaseModel):
    kind: IssueKind
    column: str
    row: Optional[int]

    class Config(PlaceboConfig):
        allow_mutation = False

    def __str__(self) -> str:
        where = self.column if self.row is None else f"{self.column}[{self.row}]"
        return f"{self.kind}: {where}"


def _as_vector(value: Any) -> np.ndarray:
    vector = np.array(value, dtype=np.float64, copy=True).reshape(-1)
    vector.setflags(write=False)
    return vector


class TrialDataset(BaseModel):
    """One row per participant.

    Binary columns are held as float64 so invalid entries survive construction
    and are reported by :func:`validate` instead of being coerced away.
    """

    z: np.ndarray
    q: np.ndarray
    x: np.ndarray
    e: np.ndarray
    d: np.ndarray
    i: np.ndarray
    m: np.ndarray
    y: np.ndarray
    a: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    covariates: dict[str, np.ndarray] = {}

    class Config(PlaceboConfig):
        allow_mutation = False
        arbitrary_types_allowed = True

    @validator("z", "q", "x", "e", "d", "i", "m", "y", "a", "w", pre=True)
    def to_vector(cls, value: Any) -> Optional[np.ndarray]:
        return None if value is None else _as_vector(value)

    @validator("covariates", pre=True)
    def to_covariates(cls, value: Any) -> dict[str, np.ndarray]:
        value = value or {}
        for name in value:
            if not str(name).startswith(COVARIATE_PREFIX):
                raise ValueError(f"covariate '{name}' must start with '{COVARIATE_PREFIX}'")
        return {str(name): _as_vector(column) for name, column in value.items()}

    @classmethod
    def from_interaction(cls, **columns: Any) -> TrialDataset:
        """Build a dataset computing ``i = e * d``."""
        columns["i"] = np.asarray(columns["e"], dtype=float) * np.asarray(
            columns["d"], dtype=float
        )
        return cls(**columns)

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def extended(self) -> bool:
        return self.a is not None and self.w is not None

    def columns(self) -> dict[str, np.ndarray]:
        """Present columns in canonical CSV order."""
        present = {name: getattr(self, name) for name in REQUIRED_COLUMNS}
        for name in OPTIONAL_COLUMNS:
            if getattr(self, name) is not None:
                present[name] = getattr(self, name)
        present.update(self.covariates)
        return present

    def replace(self, **columns: Any) -> TrialDataset:
        values = {name: getattr(self, name) for name in self.__fields__}
        values.update(columns)
        return TrialDataset(**values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrialDataset):
            return NotImplemented
        mine, theirs = self.columns(), other.columns()
        return mine.keys() == theirs.keys() and all(
            np.array_equal(mine[name], theirs[name]) for name in mine
        )

    def __repr__(self) -> str:
        return f"TrialDataset(n={self.n}, columns={list(self.columns())})"


def _column_order(name: str) -> tuple[int, str]:
    canonical = ("n",) + REQUIRED_COLUMNS + OPTIONAL_COLUMNS
    if name in canonical:
        return canonical.index(name), name
    return len(canonical), name


def validate(dataset: TrialDataset) -> list[DatasetIssue]:
    """Every invariant violation, ordered by (column, row)."""
    issues: list[DatasetIssue] = []
    columns = dataset.columns()
    n = dataset.n
    if n < MIN_PARTICIPANTS:
        issues.append(DatasetIssue(kind=IssueKind.TOO_SMALL, column="n", row=None))
    aligned = {}
    for name, column in columns.items():
        if len(column) != n:
            issues.append(DatasetIssue(kind=IssueKind.LENGTH_MISMATCH, column=name, row=None))
            continue
        aligned[name] = column
        finite = np.isfinite(column)
        for row in np.flatnonzero(~finite):
            issues.append(DatasetIssue(kind=IssueKind.NON_FINITE, column=name, row=int(row)))
        if name in BINARY_COLUMNS:
            bad = finite & (column != 0) & (column != 1)
            for row in np.flatnonzero(bad):
                issues.append(DatasetIssue(kind=IssueKind.NON_BINARY, column=name, row=int(row)))
    if all(name in aligned for name in ("e", "d", "i")):
        e, d, i = aligned["e"], aligned["d"], aligned["i"]
        checked = np.isfinite(e) & np.isfinite(d) & np.isfinite(i)
        for row in np.flatnonzero(checked & (i != e * d)):
            issues.append(
                DatasetIssue(kind=IssueKind.BROKEN_INTERACTION, column="i", row=int(row))
            )
    return sorted(
        issues,
        key=lambda issue: (_column_order(issue.column), -1 if issue.row is None else issue.row),
    )


def check(dataset: TrialDataset) -> TrialDataset:
    issues = validate(dataset)
    if issues:
        raise errors.DatasetValidationError(issues)
    return dataset


def _known(name: str) -> bool:
    return (
        name in REQUIRED_COLUMNS
        or name in OPTIONAL_COLUMNS
        or (name.startswith(COVARIATE_PREFIX) and len(name) > len(COVARIATE_PREFIX))
    )


def _parse_column(name: str, cells: Iterable[Any]) -> np.ndarray:
    values = []
    for row, cell in enumerate(cells):
        if isinstance(cell, str):
            cell = cell.strip()
        if cell is None or (isinstance(cell, str) and not cell):
            raise errors.DatasetParseError(
                f"Missing value in column '{name}' at row {row}", column=name, row=row
            )
        try:
            value = float(cell)
        except (TypeError, ValueError):
            raise errors.DatasetParseError(
                f"Cannot parse {cell!r} in column '{name}' at row {row}", column=name, row=row
            ) from None
        if np.isnan(value):
            raise errors.DatasetParseError(
                f"Missing value in column '{name}' at row {row}", column=name, row=row
            )
        values.append(value)
    return np.array(values, dtype=np.float64)


def from_frame(frame: pd.DataFrame) -> TrialDataset:
    names = [str(name).strip() for name in frame.columns]
    for name in names:
        if not _known(name):
            raise errors.DatasetParseError(f"Unknown column '{name}'", column=name)
    if len(set(names)) != len(names):
        raise errors.DatasetParseError("Duplicate column names in header")
    for name in REQUIRED_COLUMNS:
        if name not in names:
            raise errors.DatasetParseError(f"Missing required column '{name}'", column=name)
    frame = frame.set_axis(names, axis=1)
    columns = {name: _parse_column(name, frame[name]) for name in names}
    covariates = {name: columns.pop(name) for name in names if name.startswith(COVARIATE_PREFIX)}
    return TrialDataset(covariates=covariates, **columns)


def _format(name: str, column: np.ndarray) -> list[str]:
    if name in BINARY_COLUMNS or name == "i":
        return [str(int(value)) for value in column]
    # repr is the shortest string that parses back to the same float64.
    return [repr(float(value)) for value in column]


def to_frame(dataset: TrialDataset) -> pd.DataFrame:
    """String-formatted frame in canonical column order."""
    return pd.DataFrame({name: _format(name, column) for name, column in dataset.columns().items()})


def read_csv(path: PathLike) -> TrialDataset:
    """Parse and validate a dataset; refuses datasets with issues."""
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError as error:
        raise errors.DatasetParseError(f"'{path}' has no header row") from error
    except pd.errors.ParserError as error:
        raise errors.DatasetParseError(f"Malformed row in '{path}': {error}") from error
    dataset = check(from_frame(frame))
    logger.debug("Read %d participants from %s", dataset.n, path)
    return dataset


def write_csv(dataset: TrialDataset, path: PathLike) -> None:
    check(dataset)
    to_frame(dataset).to_csv(path, index=False, lineterminator="\n")
    logger.debug("Wrote %d participants to %s", dataset.n, path)
