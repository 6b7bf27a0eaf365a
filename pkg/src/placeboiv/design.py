"""Latin hypercube designs with maximin swap optimization."""
from __future__ import annotations

import logging
import os
from enum import Enum
from typing import Any
from typing import Union

import numpy as np
import pandas as pd
from pydantic import BaseModel
from pydantic import NonNegativeInt
from pydantic import conint
from pydantic import conlist
from pydantic import root_validator
from pydantic import validator
from scipy.spatial.distance import cdist
from scipy.spatial.distance import pdist
from scipy.spatial.distance import squareform

from . import rng
from .model import BaseResultModel
from .model import PlaceboConfig


logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]


class Dimension(BaseModel):
    name: str
    lower: float
    upper: float
    integer: bool = False

    class Config(PlaceboConfig):
        allow_mutation = False

    @root_validator(skip_on_failure=True)
    def check_range(cls, values: dict[str, Any]) -> dict[str, Any]:
        if not values["lower"] < values["upper"]:
            raise ValueError(f"'{values['name']}': lower must be below upper")
        return values

    def scale(self, unit: np.ndarray) -> np.ndarray:
        if not self.integer:
            return self.lower + unit * (self.upper - self.lower)
        low, high = self.lower - 0.5, self.upper + 0.5
        values = np.floor(low + unit * (high - low) + 0.5)
        return np.clip(values, self.lower, self.upper)


class Optimizer(str, Enum):
    NONE = "none"
    MAXIMIN_SWAP = "maximin_swap"


class DesignSpec(BaseModel):
    dimensions: conlist(Dimension, min_items=1)
    n_points: conint(ge=2) = 1000
    optimizer: Optimizer = Optimizer.MAXIMIN_SWAP
    iterations: NonNegativeInt = 2000
    seed: rng.Seed = 0

    class Config(PlaceboConfig):
        allow_mutation = False

    @validator("dimensions")
    def unique_names(cls, value: list[Dimension]) -> list[Dimension]:
        names = [dimension.name for dimension in value]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        return value


class Design(BaseResultModel):
    """Stratum index plus in-stratum offset per (point, dimension).

    ``unit = (strata + offsets) / n_points`` are the pre-rounding coordinates
    on which the Latin property and the maximin score are defined.
    """

    dimensions: list[Dimension]
    strata: np.ndarray
    offsets: np.ndarray
    score: float

    @property
    def n_points(self) -> int:
        return self.strata.shape[0]

    @property
    def names(self) -> list[str]:
        return [dimension.name for dimension in self.dimensions]

    @property
    def unit(self) -> np.ndarray:
        return (self.strata + self.offsets) / self.n_points

    @property
    def points(self) -> np.ndarray:
        unit = self.unit
        return np.column_stack(
            [dimension.scale(unit[:, j]) for j, dimension in enumerate(self.dimensions)]
        )

    def rows(self) -> list[dict[str, float]]:
        return [dict(zip(self.names, row)) for row in self.points.tolist()]


def _row_distances(unit: np.ndarray, row: int) -> np.ndarray:
    return cdist(unit[row : row + 1], unit, "sqeuclidean")[0]


def _squared_distances(unit: np.ndarray) -> np.ndarray:
    distances = squareform(pdist(unit, "sqeuclidean"))
    np.fill_diagonal(distances, np.inf)
    return distances


def min_distance(unit: np.ndarray) -> float:
    """Smallest pairwise Euclidean distance between rows of ``unit``."""
    return float(np.sqrt(pdist(unit, "sqeuclidean").min()))


def is_latin(design: Design) -> bool:
    expected = np.arange(design.n_points)
    return all(
        np.array_equal(np.sort(design.strata[:, j]), expected)
        for j in range(design.strata.shape[1])
    ) and bool(np.all((design.offsets >= 0) & (design.offsets < 1)))


def lhs_sample(spec: DesignSpec) -> Design:
    """One uniform point per stratum, strata independently permuted per dimension."""
    generator = rng.generator(spec.seed, rng.Tag.DESIGN, 0)
    n, d = spec.n_points, len(spec.dimensions)
    strata = np.empty((n, d), dtype=np.int64)
    offsets = np.empty((n, d), dtype=np.float64)
    for j in range(d):
        strata[:, j] = generator.permutation(n)
        offsets[:, j] = generator.random(n)
    unit = (strata + offsets) / n
    return Design(
        dimensions=list(spec.dimensions),
        strata=strata,
        offsets=offsets,
        score=min_distance(unit),
    )


def maximin_optimize(design: Design, iterations: int, seed: int) -> Design:
    """Hill climbing over within-dimension swaps; accepts iff min distance does not drop."""
    if iterations < 0:
        raise ValueError(f"'iterations' must be non-negative; got {iterations}")
    if iterations == 0:
        return design
    strata, offsets = design.strata.copy(), design.offsets.copy()
    n, d = strata.shape
    unit = (strata + offsets) / n
    distances = _squared_distances(unit)
    row_min = distances.min(axis=1)
    row_arg = distances.argmin(axis=1)
    current = float(row_min.min())
    generator = rng.generator(seed, rng.Tag.DESIGN, 1)
    debug = logger.isEnabledFor(logging.DEBUG)
    accepted = 0

    for _ in range(iterations):
        i, k = generator.choice(n, size=2, replace=False)
        j = int(generator.integers(d))
        unit[[i, k], j] = unit[[k, i], j]
        new_i, new_k = _row_distances(unit, i), _row_distances(unit, k)
        new_i[i], new_k[k] = np.inf, np.inf

        others = np.ones(n, dtype=bool)
        others[[i, k]] = False
        stale = others & ((row_arg == i) | (row_arg == k))
        untouched = row_min[others & ~stale]
        candidate = min(
            float(new_i.min()),
            float(new_k.min()),
            float(untouched.min()) if untouched.size else np.inf,
            float(distances[np.ix_(stale, others)].min()) if stale.any() else np.inf,
        )
        if candidate < current:
            unit[[i, k], j] = unit[[k, i], j]
            continue

        strata[[i, k], j] = strata[[k, i], j]
        offsets[[i, k], j] = offsets[[k, i], j]
        distances[i, :], distances[:, i] = new_i, new_i
        distances[k, :], distances[:, k] = new_k, new_k
        for row in np.flatnonzero(stale):
            row_min[row], row_arg[row] = distances[row].min(), distances[row].argmin()
        for column, values in ((i, new_i), (k, new_k)):
            better = others & ~stale & (values < row_min)
            row_min[better], row_arg[better] = values[better], column
        for row in (i, k):
            row_min[row], row_arg[row] = distances[row].min(), distances[row].argmin()
        current = float(row_min.min())
        accepted += 1
        if debug:
            assert is_latin(
                Design(dimensions=design.dimensions, strata=strata, offsets=offsets, score=0.0)
            ), "swap broke the Latin property"

    logger.debug("Maximin: %d of %d swaps accepted", accepted, iterations)
    return Design(
        dimensions=design.dimensions,
        strata=strata,
        offsets=offsets,
        score=float(np.sqrt(current)),
    )


def build_design(spec: DesignSpec) -> Design:
    design = lhs_sample(spec)
    if spec.optimizer == Optimizer.MAXIMIN_SWAP:
        design = maximin_optimize(design, spec.iterations, spec.seed)
    logger.info(
        "Design with %d points in %d dimensions, maximin score %.4g",
        design.n_points,
        len(design.dimensions),
        design.score,
    )
    return design


def to_frame(design: Design) -> pd.DataFrame:
    frame = pd.DataFrame(design.points, columns=design.names)
    for dimension in design.dimensions:
        if dimension.integer:
            frame[dimension.name] = frame[dimension.name].astype(np.int64)
    return frame


def write_csv(design: Design, path: PathLike) -> None:
    to_frame(design).to_csv(path, index=False, lineterminator="\n")
