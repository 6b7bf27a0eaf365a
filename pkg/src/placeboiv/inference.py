"""Randomization tests, shifted-null tests, p-value profiles and test-inversion CIs.

Every test statistic used here is a fixed multiple of a centered sum
``S = sum((a_k - mean(a)) * r_k)`` of a response ``r`` against an instrument
``a``; only ``r`` is shuffled, so the multiple is the same for every
permutation and all p-values are counted on the ``S`` scale. This makes the
psi-hat and ITT based tests agree exactly on a shared permutation stream.
"""
from __future__ import annotations

import concurrent.futures
import itertools
import logging
import math
from typing import Iterator
from typing import Optional
from typing import Union

import numpy as np

from . import errors
from . import estimators
from . import rng
from . import utils
from .data import DatasetIssue
from .data import IssueKind
from .data import TrialDataset
from .model import Effect
from .model import EstimateKind
from .model import ProfilePoint
from .model import ProfileSide
from .model import PvalueProfile
from .model import RandCI
from .model import RandTestResult
from .model import Side


logger = logging.getLogger(__name__)

DEFAULT_PERMUTATIONS = 10_000
MIN_PERMUTATIONS = 99
MAX_EXHAUSTIVE_N = 8
CHUNK_SIZE = 512
CACHE_LIMIT = 4_000_000
QUANTILES = (0.025, 0.05, 0.5, 0.95, 0.975)
TIE_TOLERANCE = 1e-12
GRID_POINTS_PER_HALF_WIDTH = 100
PILOT_SPREADS = 6.0
MAX_PROFILE_STEPS = 20_000


def pvalues(
    observed: float, null: np.ndarray, magnitude: float = 0.0
) -> tuple[float, float, float]:
    """Add-one (greater, less, two-sided) p-values; ties count against the null.

    Two values tie when they differ by less than ``TIE_TOLERANCE`` times the
    largest of ``|observed|``, ``max |null|`` and ``magnitude``, the size of
    the summands behind the statistic.
    """
    size = max(abs(observed), float(np.abs(null).max()) if null.size else 0.0, magnitude)
    gamma = TIE_TOLERANCE * size
    denominator = null.size + 1
    greater = (1 + np.count_nonzero(null >= observed - gamma)) / denominator
    less = (1 + np.count_nonzero(null <= observed + gamma)) / denominator
    two_sided = (1 + np.count_nonzero(np.abs(null) >= abs(observed) - gamma)) / denominator
    return float(greater), float(less), float(two_sided)


class PermutationStream:
    """Deterministic permutation rows for one ``(n, seed)`` pair.

    When every permutation can be listed within the requested count
    (``n! <= B + 1``) the stream enumerates all non-identity permutations, so
    the add-one p-value equals the full-enumeration p-value.
    """

    __slots__ = "n", "seed", "exhaustive", "count", "chunk_size"

    def __init__(
        self,
        n: int,
        n_permutations: int,
        seed: int,
        chunk_size: int = CHUNK_SIZE,
        exhaustive: Optional[bool] = None,
    ) -> None:
        self.n = n
        self.seed = seed
        self.chunk_size = chunk_size
        enumerable = n <= MAX_EXHAUSTIVE_N and math.factorial(n) <= n_permutations + 1
        self.exhaustive = enumerable if exhaustive is None else exhaustive
        if self.exhaustive:
            if n > MAX_EXHAUSTIVE_N:
                raise ValueError(f"Full enumeration is limited to n <= {MAX_EXHAUSTIVE_N}")
            self.count = math.factorial(n) - 1
        else:
            self.count = n_permutations

    def chunks(self) -> Iterator[tuple[int, int]]:
        for start in range(0, self.count, self.chunk_size):
            yield start, min(self.chunk_size, self.count - start)

    def rows(self, start: int, count: int) -> np.ndarray:
        if self.exhaustive:
            listed = itertools.islice(itertools.permutations(range(self.n)), start + 1, None)
            return np.array(list(itertools.islice(listed, count)), dtype=np.intp)
        return rng.permutations(self.seed, self.n, count, start)

    def __repr__(self) -> str:
        return utils.to_str(self, n=self.n, seed=self.seed, count=self.count)


class ShiftedNull:
    """Null components of a statistic that is linear in a shift.

    The response under test is ``r + shift * c`` for a fixed direction ``c``
    and the whole sum is permuted, so the observed and permuted ``S`` at any
    shift are ``S_r + shift * S_c``. For the location test of
    ``H0: ITT = shift`` the direction is the control-arm indicator; for a
    p-value profile it is minus the targeted regressor (``M`` or ``X``).
    """

    __slots__ = (
        "observed_r",
        "observed_c",
        "null_r",
        "null_c",
        "magnitude_r",
        "magnitude_c",
        "scale",
        "count",
    )

    def __init__(
        self,
        observed: np.ndarray,
        null: np.ndarray,
        magnitudes: np.ndarray,
        scale: float,
        count: int,
    ):
        self.observed_r, self.observed_c = float(observed[0]), float(observed[1])
        self.null_r, self.null_c = null[0], null[1]
        self.magnitude_r, self.magnitude_c = float(magnitudes[0]), float(magnitudes[1])
        self.scale = scale
        self.count = count

    def statistic(self, shift: float) -> float:
        return (self.observed_r + shift * self.observed_c) / self.scale

    def null(self, shift: float) -> np.ndarray:
        return (self.null_r + shift * self.null_c) / self.scale

    def pvalue(self, shift: float, side: Union[Side, str]) -> float:
        observed = self.observed_r + shift * self.observed_c
        null = self.null_r + shift * self.null_c
        magnitude = self.magnitude_r + abs(shift) * self.magnitude_c
        greater, less, two_sided = pvalues(observed, null, magnitude)
        return {Side.GREATER: greater, Side.LESS: less, Side.TWO_SIDED: two_sided}[Side(side)]

    def crossings(self) -> np.ndarray:
        """Shifts at which a permuted statistic meets the observed one.

        Every p-value is constant beyond the outermost crossing on each side.
        """
        slope = self.observed_c - self.null_c
        moving = np.abs(slope) > TIE_TOLERANCE * self.magnitude_c
        return (self.null_r[moving] - self.observed_r) / slope[moving]

    def spread(self, shift: float = 0.0) -> float:
        """Standard deviation of the permuted statistic at ``shift``."""
        return float(np.std(self.null(shift)))


def _magnitudes(responses: np.ndarray, arm: np.ndarray) -> np.ndarray:
    """``sum(|a_k - mean(a)| * |r_k|)`` per response, the rounding scale of ``S``."""
    return np.abs(np.atleast_2d(responses)) @ np.abs(arm - arm.mean())


def _check_arms(arm: np.ndarray, instrument: str) -> None:
    bad = np.flatnonzero((arm != 0) & (arm != 1))
    if bad.size:
        raise errors.DatasetValidationError(
            DatasetIssue(kind=IssueKind.NON_BINARY, column=instrument, row=int(row))
            for row in bad
        )
    treated = arm == 1
    for value, members in ((0, ~treated), (1, treated)):
        if not members.any():
            raise errors.EmptyArmError(instrument, value)


class RandomizationEngine:
    """Runs permutation tests on a fixed ``(B, seed)`` stream.

    Results depend only on the dataset, ``n_permutations`` and ``seed``; the
    ``workers`` count only spreads fixed-size chunks over threads.
    """

    __slots__ = "_n_permutations", "_seed", "_workers", "_chunk_size", "_cache"

    def __init__(
        self,
        n_permutations: int = DEFAULT_PERMUTATIONS,
        seed: Optional[int] = None,
        workers: int = 1,
        chunk_size: int = CHUNK_SIZE,
    ) -> None:
        if n_permutations < 1:
            raise ValueError(f"'n_permutations' must be positive; got {n_permutations}")
        if workers < 1:
            raise ValueError(f"'workers' must be positive; got {workers}")
        self._n_permutations = n_permutations
        self._seed = rng.draw_seed() if seed is None else int(seed)
        self._workers = workers
        self._chunk_size = chunk_size
        self._cache: dict[tuple[int, bool], list[np.ndarray]] = {}

    @property
    def n_permutations(self) -> int:
        return self._n_permutations

    @property
    def seed(self) -> int:
        return self._seed

    def stream(self, n: int, exhaustive: Optional[bool] = None) -> PermutationStream:
        return PermutationStream(
            n, self._n_permutations, self._seed, self._chunk_size, exhaustive
        )

    def _rows(self, stream: PermutationStream) -> Iterator[np.ndarray]:
        key = (stream.n, stream.exhaustive)
        if key in self._cache:
            yield from self._cache[key]
            return
        cacheable = stream.count * stream.n <= CACHE_LIMIT
        chunks = []
        for start, count in stream.chunks():
            rows = stream.rows(start, count)
            if cacheable:
                chunks.append(rows)
            yield rows
        if cacheable:
            self._cache[key] = chunks

    def centered_sums(
        self,
        responses: np.ndarray,
        arm: np.ndarray,
        exhaustive: Optional[bool] = None,
    ) -> tuple[np.ndarray, np.ndarray, PermutationStream]:
        """Observed and permuted ``S`` for each row of ``responses``.

        Returns ``(observed[k], null[k, B], stream)``.
        """
        responses = np.atleast_2d(np.asarray(responses, dtype=np.float64))
        centered = arm - arm.mean()
        stream = self.stream(responses.shape[1], exhaustive)
        observed = np.array([response @ centered for response in responses])

        def evaluate(rows: np.ndarray) -> np.ndarray:
            return np.stack([response[rows] @ centered for response in responses])

        chunks = list(self._rows(stream))
        if self._workers > 1 and len(chunks) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=self._workers) as pool:
                parts = list(pool.map(evaluate, chunks))
        else:
            parts = [evaluate(rows) for rows in chunks]
        null = np.concatenate(parts, axis=1) if parts else np.empty((len(responses), 0))
        return observed, null, stream

    def _instrument_test(
        self,
        response: np.ndarray,
        instrument: np.ndarray,
        denominator: float,
        statistic: str,
        observed_stat: float,
        exhaustive: Optional[bool] = None,
    ) -> RandTestResult:
        n = len(response)
        observed, null, stream = self.centered_sums(response, instrument, exhaustive)
        observed_s, null_s = float(observed[0]), null[0]
        magnitude = float(_magnitudes(response, instrument)[0])
        greater, less, two_sided = pvalues(observed_s, null_s, magnitude)
        if denominator < 0:
            greater, less = less, greater
        quantiles = np.quantile(null_s / (n * denominator), QUANTILES)
        return RandTestResult(
            statistic=statistic,
            observed_stat=observed_stat,
            n_permutations=stream.count,
            p_two_sided=two_sided,
            p_greater=greater,
            p_less=less,
            p_equal_tailed=min(1.0, 2 * min(greater, less)),
            null_quantiles={f"{q:g}": float(v) for q, v in zip(QUANTILES, quantiles)},
            seed=self._seed,
        )

    def placebo_test(
        self, dataset: TrialDataset, exhaustive: Optional[bool] = None
    ) -> RandTestResult:
        """Shuffle Y against intact (Q, M) pairs; statistic psi-hat."""
        estimate = estimators.placebo_iv(dataset)
        return self._instrument_test(
            dataset.y, dataset.q, estimate.denominator, "psi_hat", estimate.value, exhaustive
        )

    def residual_test(
        self,
        dataset: TrialDataset,
        residuals: np.ndarray,
        statistic: str,
        exhaustive: Optional[bool] = None,
    ) -> RandTestResult:
        """Shuffle ``residuals`` against intact (Z, X) pairs; statistic cov(Z,R)/cov(Z,X)."""
        estimate = estimators.treatment_iv_on(
            dataset, residuals, EstimateKind.TREATMENT_IV_TWO_STEP
        )
        return self._instrument_test(
            residuals, dataset.z, estimate.denominator, statistic, estimate.value, exhaustive
        )

    def treatment_test(
        self,
        dataset: TrialDataset,
        adjusted: bool = True,
        psi: Optional[float] = None,
        exhaustive: Optional[bool] = None,
    ) -> RandTestResult:
        """Residuals use psi-hat from the observed data unless ``psi`` is given."""
        if not adjusted:
            return self.residual_test(dataset, dataset.y, "beta_hat_unadjusted", exhaustive)
        if psi is None:
            psi = estimators.placebo_iv(dataset).value
            statistic = "beta_hat_two_step"
        else:
            statistic = "beta_hat_fixed_psi"
        residuals = estimators.placebo_residuals(dataset, psi).values
        return self.residual_test(dataset, residuals, statistic, exhaustive)

    def multi_mediator_test(
        self,
        dataset: TrialDataset,
        psi: Optional[float] = None,
        kappa: Optional[float] = None,
    ) -> RandTestResult:
        if psi is None or kappa is None:
            estimate = estimators.multi_mediator_two_step(dataset)
            psi = estimate.psi.value if psi is None else psi
            kappa = estimate.kappa.value if kappa is None else kappa
            statistic = "beta_hat_multi_mediator"
        else:
            statistic = "beta_hat_fixed_psi_kappa"
        residuals = estimators.multi_mediator_residuals(dataset, psi, kappa).values
        return self.residual_test(dataset, residuals, statistic)

    def shifted_null(
        self, response: np.ndarray, arm: np.ndarray, instrument: str = "arm"
    ) -> ShiftedNull:
        response = np.asarray(response, dtype=np.float64)
        arm = np.asarray(arm, dtype=np.float64)
        if response.shape != arm.shape:
            raise errors.LengthMismatchError(f"Lengths differ: {response.size} != {arm.size}")
        _check_arms(arm, instrument)
        control = (arm == 0).astype(np.float64)
        return self._linear_null(response, control, arm, len(arm) * estimators.sample_var(arm))

    def regressor_null(
        self, response: np.ndarray, regressor: np.ndarray, arm: np.ndarray, instrument: str = "arm"
    ) -> ShiftedNull:
        """Nulls for ``H0: theta = shift`` on ``response - shift * regressor``.

        Each permutation moves the response and regressor values of a unit
        together against the fixed arm, and the statistic is scaled to
        ``theta_hat - shift``.
        """
        response = np.asarray(response, dtype=np.float64)
        regressor = np.asarray(regressor, dtype=np.float64)
        arm = np.asarray(arm, dtype=np.float64)
        if not response.shape == regressor.shape == arm.shape:
            raise errors.LengthMismatchError(
                f"Lengths differ: {response.size}, {regressor.size}, {arm.size}"
            )
        _check_arms(arm, instrument)
        scale = len(arm) * estimators.sample_cov(arm, regressor)
        return self._linear_null(response, -regressor, arm, scale)

    def _linear_null(
        self, response: np.ndarray, direction: np.ndarray, arm: np.ndarray, scale: float
    ) -> ShiftedNull:
        components = np.stack([response, direction])
        observed, null, stream = self.centered_sums(components, arm)
        return ShiftedNull(observed, null, _magnitudes(components, arm), scale, stream.count)

    def shifted_test(
        self,
        response: np.ndarray,
        arm: np.ndarray,
        shift: float,
        side: Union[Side, str] = Side.TWO_SIDED,
    ) -> float:
        return self.shifted_null(response, arm).pvalue(shift, side)

    def profile(
        self,
        dataset: TrialDataset,
        effect: Union[Effect, str],
        grid_step: Optional[float] = None,
        max_steps: int = MAX_PROFILE_STEPS,
    ) -> PvalueProfile:
        effect = Effect(effect)
        if effect == Effect.PSI:
            estimate = estimators.placebo_iv(dataset)
            response, arm, target, instrument = dataset.y, dataset.q, dataset.m, "q"
        else:
            estimate = estimators.treatment_iv_two_step(dataset)
            psi = estimators.placebo_iv(dataset).value
            response = estimators.placebo_residuals(dataset, psi).values
            arm, target, instrument = dataset.z, dataset.x, "z"
        theta_hat = estimate.value
        scale = estimators.scale_factor(arm, target)
        shifted = self.regressor_null(response, target, arm, instrument)
        floor = 1.0 / (shifted.count + 1)
        # H1: theta > theta_j is cov(a, r - theta_j * t) > 0 when K > 0 and < 0 otherwise.
        above, below = (Side.GREATER, Side.LESS) if scale > 0 else (Side.LESS, Side.GREATER)

        if grid_step is None:
            residual = response - theta_hat * target
            # Rounding noise of a perfect fit is not a spread.
            if np.ptp(residual) <= TIE_TOLERANCE * max(1.0, float(np.abs(residual).max())):
                spread = 0.0
            else:
                spread = shifted.spread(theta_hat)
            grid_step = PILOT_SPREADS * spread / GRID_POINTS_PER_HALF_WIDTH
        elif grid_step <= 0:
            raise ValueError(f"'grid_step' must be positive; got {grid_step}")

        center = ProfilePoint(
            theta=theta_hat,
            p_one_sided=shifted.pvalue(theta_hat, above),
            side=ProfileSide.LOWER,
        )
        lower, upper = [], []
        if grid_step > 0 and np.isfinite(grid_step):
            crossings = shifted.crossings()
            for side, direction, points, alternative, last in (
                (ProfileSide.LOWER, -1.0, lower, above, crossings.min(initial=theta_hat)),
                (ProfileSide.UPPER, 1.0, upper, below, crossings.max(initial=theta_hat)),
            ):
                for step in range(1, max_steps + 1):
                    theta = theta_hat + direction * step * grid_step
                    p = shifted.pvalue(theta, alternative)
                    points.append(ProfilePoint(theta=theta, p_one_sided=p, side=side))
                    if p <= floor:
                        break
                    if direction * (theta - last) > 0:
                        logger.debug("Profile %s side levels off at p=%.4g", side.value, p)
                        break
                else:
                    logger.warning(
                        "Profile %s side stopped after %d steps above the p-value floor",
                        side.value,
                        max_steps,
                    )
        else:
            grid_step = 0.0
        grid = lower[::-1] + [center] + upper
        logger.debug(
            "Profile for %s: %d grid points, step %.4g", effect.value, len(grid), grid_step
        )
        return PvalueProfile(
            effect=effect,
            estimate=theta_hat,
            grid_step=grid_step,
            scale=scale,
            n_permutations=shifted.count,
            seed=self._seed,
            grid=grid,
        )

    def __repr__(self) -> str:
        return utils.to_str(
            self, n_permutations=self._n_permutations, seed=self._seed, workers=self._workers
        )


def _check_permutations(n_permutations: int) -> None:
    if n_permutations < MIN_PERMUTATIONS:
        raise ValueError(f"'n_permutations' must be at least {MIN_PERMUTATIONS}")


def placebo_rand_test(
    dataset: TrialDataset, n_permutations: int = DEFAULT_PERMUTATIONS, seed: int = 0
) -> RandTestResult:
    _check_permutations(n_permutations)
    return RandomizationEngine(n_permutations, seed).placebo_test(dataset)


def treatment_rand_test(
    dataset: TrialDataset,
    n_permutations: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
    adjusted: bool = True,
) -> RandTestResult:
    _check_permutations(n_permutations)
    return RandomizationEngine(n_permutations, seed).treatment_test(dataset, adjusted)


def shifted_null_test(
    response: np.ndarray,
    arm: np.ndarray,
    shift: float,
    n_permutations: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
    side: Union[Side, str] = Side.TWO_SIDED,
) -> float:
    _check_permutations(n_permutations)
    return RandomizationEngine(n_permutations, seed).shifted_test(response, arm, shift, side)


def exact_rand_test(
    dataset: TrialDataset, effect: Union[Effect, str] = Effect.PSI, adjusted: bool = True
) -> RandTestResult:
    """Full enumeration of all n! orderings; only for n <= 8."""
    if dataset.n > MAX_EXHAUSTIVE_N:
        raise ValueError(f"Full enumeration is limited to n <= {MAX_EXHAUSTIVE_N}")
    engine = RandomizationEngine(math.factorial(dataset.n) - 1, seed=0)
    if Effect(effect) == Effect.PSI:
        return engine.placebo_test(dataset, exhaustive=True)
    return engine.treatment_test(dataset, adjusted, exhaustive=True)


def pvalue_profile(
    dataset: TrialDataset,
    effect: Union[Effect, str],
    grid_step: Optional[float] = None,
    n_permutations: int = DEFAULT_PERMUTATIONS,
    seed: int = 0,
) -> PvalueProfile:
    return RandomizationEngine(n_permutations, seed).profile(dataset, effect, grid_step)


def ci_from_profile(profile: PvalueProfile, alpha: float) -> RandCI:
    """Smallest and largest non-rejected grid values at one-sided level ``alpha``."""
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"'alpha' must be in (0, 0.5); got {alpha}")
    theta_hat, step = profile.estimate, profile.grid_step
    rejected_below = [
        point.theta
        for point in profile.points(ProfileSide.LOWER)
        if point.theta < theta_hat and point.p_one_sided <= alpha
    ]
    rejected_above = [
        point.theta
        for point in profile.points(ProfileSide.UPPER)
        if point.theta > theta_hat and point.p_one_sided <= alpha
    ]
    if not rejected_below:
        raise errors.ProfileTooNarrowError(ProfileSide.LOWER.value, alpha)
    if not rejected_above:
        raise errors.ProfileTooNarrowError(ProfileSide.UPPER.value, alpha)
    return RandCI(
        level=1 - 2 * alpha,
        alpha=alpha,
        lower=min(max(rejected_below) + step, theta_hat),
        upper=max(min(rejected_above) - step, theta_hat),
        estimate=theta_hat,
    )
