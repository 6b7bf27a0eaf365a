from __future__ import annotations

import functools

from pydantic import BaseSettings
from pydantic import PositiveInt
from pydantic import confloat
from pydantic import validator


LOG_LEVELS = ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG")


class PlaceboSettings(BaseSettings):
    """Defaults for the command line, overridable with ``PLACEBOIV_*`` variables."""

    permutations: PositiveInt = 10_000
    harness_permutations: PositiveInt = 999
    design_points: PositiveInt = 1000
    maximin_iterations: int = 2000
    workers: PositiveInt = 1
    alpha_pretest: confloat(ge=0.0, le=1.0) = 0.05
    log_level: str = "INFO"

    class Config(BaseSettings.Config):
        env_prefix = "PLACEBOIV_"
        env_file = ".env"

    @validator("log_level")
    def known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}")
        return value

    @validator("maximin_iterations")
    def non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("maximin_iterations must be non-negative")
        return value


@functools.lru_cache(maxsize=1)
def get_settings() -> PlaceboSettings:
    return PlaceboSettings()
