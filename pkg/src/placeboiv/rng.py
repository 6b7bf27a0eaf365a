"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, tag)`` whose counter starts
at the stream index, so stream ``j`` never depends on how many other streams
were drawn before it, or by which worker.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np
from pydantic import BaseModel
from pydantic import conint


MASK64 = (1 << 64) - 1

Seed = conint(ge=0, le=MASK64)


class Tag(IntEnum):
    DESIGN = 1
    PERMUTATION = 2
    DATASET = 3
    REPLICATE = 4


# Order is part of the stream layout; append only.
VARIABLES = (
    "z",
    "q",
    "w",
    "u",
    "c1",
    "c2",
    "c3",
    "c4",
    "v1",
    "v2",
    "v3",
    "v4",
    "l1",
    "l2",
    "l3",
    "eps_x",
    "eps_e",
    "eps_d",
    "eps_m",
    "eps_a",
    "eps_y",
)
_VARIABLE_BASE = 16


def variable_tag(variable: str) -> int:
    try:
        return _VARIABLE_BASE + VARIABLES.index(variable)
    except ValueError:
        raise ValueError(f"Unknown stream variable '{variable}'") from None


def generator(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    key = (int(seed) & MASK64) | (int(tag) << 64)
    return np.random.Generator(np.random.Philox(counter=int(index) << 128, key=key))


def derive_seed(seed: int, *ids: int) -> int:
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in ids))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def draw_seed() -> int:
    return int(np.random.SeedSequence().entropy) & MASK64


def permutations(seed: int, n: int, count: int, start: int = 0) -> np.ndarray:
    """Rows ``start .. start + count - 1`` of the permutation stream for ``seed``."""
    if count <= 0:
        return np.empty((0, n), dtype=np.intp)
    rows = [generator(seed, Tag.PERMUTATION, start + j).permutation(n) for j in range(count)]
    return np.stack(rows)


class RngSeedPlan(BaseModel):
    master_seed: Seed

    class Config:
        allow_mutation = False

    def dataset_seed(self, index: int) -> int:
        return derive_seed(self.master_seed, Tag.DATASET, index)

    def permutation_seed(self, index: int) -> int:
        return derive_seed(self.master_seed, Tag.PERMUTATION, index)

    def generator(self, dataset: int, variable: str) -> np.random.Generator:
        return generator(self.dataset_seed(dataset), variable_tag(variable))
