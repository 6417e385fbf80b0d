"""
Exact finite-N analysis of the chain.

Stationary laws come from detailed balance in log space, transient laws from
uniformization at the fixed rate q = (λ+μ+ε)N, and worst-case total variation
profiles from batched point-mass rows advanced together.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import logsumexp
from scipy.stats import poisson

from epsistools.chain import (
    ModelParams,
    birth_rate,
    death_rate,
    derived,
    generator_bands,
    uniformization_rate,
)
from epsistools.errors import DomainError, InfeasibleWorkloadError, NumericalFailure
from epsistools.streams import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-12
NORMALISATION_DEFECT = 1e-9


class ProbabilityVector:
    """
    A probability distribution on consecutive states.

    Attributes
    ----------
    `values` : numpy.ndarray
        Non-negative masses summing to 1, indexed by state.
    `truncation_error` : float
        Poisson mass discarded while computing the vector (0 for exact laws).

    Methods
    -------
    `point_mass`
        Dirac mass at one state.
    `mean`, `variance`
        Moments of the state.
    `mass`
        Total mass of a boolean mask of states.
    """

    def __init__(self, values, truncation_error: float = 0.0):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise DomainError("a probability vector must be a non-empty 1-d sequence")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("probability masses must be finite and non-negative")
        tolerance = 1e-12 + values.size * np.finfo(float).eps
        if abs(values.sum() - 1.0) > tolerance:
            raise DomainError(f"masses sum to {values.sum()!r}, not 1")
        values.setflags(write=False)
        self._values = values
        self.truncation_error = float(truncation_error)

    @classmethod
    def point_mass(cls, N: int, x: int) -> "ProbabilityVector":
        if not 0 <= x <= N:
            raise DomainError(f"x={x} outside {{0..{N}}}")
        values = np.zeros(N + 1)
        values[x] = 1.0
        return cls(values)

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self) -> int:
        return self._values.size

    def mean(self) -> float:
        return float(np.dot(np.arange(self._values.size), self._values))

    def variance(self) -> float:
        states = np.arange(self._values.size)
        centred = states - self.mean()
        return float(np.dot(centred * centred, self._values))

    def mass(self, mask) -> float:
        return float(self._values[np.asarray(mask, dtype=bool)].sum())


@dataclass(frozen=True)
class MixingProfile:
    """
    Worst-case total variation distance to stationarity along a time grid.

    `rho[i]` is the maximum over `start_set` of the distance at `times[i]`;
    `worst_start[i]` is a start attaining it.
    """

    times: np.ndarray
    rho: np.ndarray
    start_set: tuple
    worst_start: np.ndarray = field(repr=False)
    truncation_error: float = 0.0


@dataclass(frozen=True)
class MeanDecay:
    """Exact means at t_N + c and t_N + c + 1 with successive offset ratios."""

    c: np.ndarray
    mean_at_c: np.ndarray
    mean_at_c_plus_one: np.ndarray
    x_star_N: float
    stationary_mean: float

    @property
    def ratio_star(self) -> np.ndarray:
        return (self.mean_at_c - self.x_star_N) / (self.mean_at_c_plus_one - self.x_star_N)

    @property
    def ratio_stationary(self) -> np.ndarray:
        return (self.mean_at_c - self.stationary_mean) / (
            self.mean_at_c_plus_one - self.stationary_mean
        )


def _log_detailed_balance(params: ModelParams, lower: int, upper: int) -> np.ndarray:
    states = np.arange(lower, upper)
    log_ratio = np.log(birth_rate(params, states)) - np.log(death_rate(params, states + 1))
    log_weights = np.concatenate(([0.0], np.cumsum(log_ratio)))
    return log_weights - logsumexp(log_weights)


def stationary_distribution(params: ModelParams) -> ProbabilityVector:
    """
    Stationary law π_N from detailed balance, π(x+1)/π(x) = birth(x)/death(x+1).

    Cumulative log-ratios are normalised with log-sum-exp so that no product of
    rate ratios is ever formed.

    Examples
    --------
    >>> stationary_distribution(ModelParams(1.0, 2.0, 0.5, 1)).values
    array([0.8, 0.2])
    """
    return ProbabilityVector(np.exp(_log_detailed_balance(params, 0, params.N)))


def restricted_stationary(
    params: ModelParams, lower: int, upper: int
) -> ProbabilityVector:
    """
    Detailed-balance law of the chain reflected inside {lower..upper}.

    The reflected chain keeps the interior rates and only moves inwards from
    the two boundary states, so the same ratios apply on the restricted range.
    Index i of the result is state lower + i.
    """
    if not 0 <= lower < upper <= params.N:
        raise DomainError(f"need 0 ≤ lower < upper ≤ N, got [{lower}, {upper}]")
    return ProbabilityVector(np.exp(_log_detailed_balance(params, lower, upper)))


def tv_distance(p, q) -> float:
    """
    Total variation distance (1/2)·Σ|p_i − q_i|.

    Examples
    --------
    >>> tv_distance([1.0, 0.0], [0.5, 0.5])
    0.5
    """
    p_values = p.values if isinstance(p, ProbabilityVector) else np.asarray(p, float)
    q_values = q.values if isinstance(q, ProbabilityVector) else np.asarray(q, float)
    if p_values.shape != q_values.shape:
        raise DomainError(
            f"length mismatch: {p_values.shape[-1]} vs {q_values.shape[-1]}"
        )
    return float(min(1.0, 0.5 * np.abs(p_values - q_values).sum()))


def _tv_rows(rows: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return np.minimum(1.0, 0.5 * np.abs(rows - pi).sum(axis=-1))


class Uniformization:
    """
    Transient laws by uniformization at rate q = (λ+μ+ε)N.

    P^t = Σ_k Pois(k; qt) K^k with K = I + Q/q. Rows (point masses or any
    distributions) are advanced together as a 2-d array.

    Attributes
    ----------
    `q` : float
        Uniformization rate.
    `tolerance` : float
        Total Poisson mass allowed to be discarded per advance.

    Methods
    -------
    `step`
        One application of the kernel K to a batch of rows.
    `advance`
        Rows at time t, with the discarded Poisson mass.
    """

    def __init__(self, params: ModelParams, tolerance: float = DEFAULT_TOLERANCE):
        if not 0 < tolerance < 1e-3:
            raise DomainError(f"tolerance must lie in (0, 1e-3), got {tolerance}")
        down, up, diag = generator_bands(params)
        self.params = params
        self.q = uniformization_rate(params)
        self.tolerance = tolerance
        self._stay = 1.0 + diag / self.q
        self._up = up[:-1] / self.q
        self._down = down[1:] / self.q

    def step(self, rows: np.ndarray) -> np.ndarray:
        out = rows * self._stay
        out[..., 1:] += rows[..., :-1] * self._up
        out[..., :-1] += rows[..., 1:] * self._down
        return out

    def poisson_window(self, qt: float) -> tuple[int, np.ndarray, float]:
        """
        Truncation window of the Poisson(qt) weights.

        Returns
        -------
        tuple[int, numpy.ndarray, float]
            First kept index, kept weights, discarded mass (≤ tolerance).
        """
        budget = math.ceil(qt + 12.0 * math.sqrt(qt) + 30.0)
        half = self.tolerance / 2.0
        left = int(poisson.ppf(half, qt))
        while left > 0 and poisson.cdf(left - 1, qt) > half:
            left -= 1
        right = max(int(poisson.isf(half, qt)), left)
        while poisson.sf(right, qt) > half:
            right += 1
        if right > budget:
            raise NumericalFailure(
                f"Poisson truncation needs {right} steps, budget is {budget} (qt={qt:.6g})"
            )
        discarded = float(poisson.cdf(left - 1, qt) + poisson.sf(right, qt))
        weights = poisson.pmf(np.arange(left, right + 1), qt)
        return left, weights, discarded

    def advance(self, rows, t: float) -> tuple[np.ndarray, float]:
        """
        Advance rows by time t.

        Parameters
        ----------
        rows : numpy.ndarray
            Shape (N+1,) or (m, N+1), each row a distribution.
        t : float
            Non-negative time.

        Returns
        -------
        tuple[numpy.ndarray, float]
            Renormalised rows at time t and the discarded Poisson mass.
        """
        rows = np.array(rows, dtype=float)
        if t < 0 or math.isnan(t):
            raise DomainError(f"t must be non-negative, got {t}")
        if t == 0:
            return rows, 0.0
        left, weights, discarded = self.poisson_window(self.q * t)
        right = left + weights.size - 1
        logger.debug(
            "uniformization: qt=%.6g steps=%d discarded=%.3e", self.q * t, right, discarded
        )
        if discarded > 1e-13:
            logger.warning("Poisson truncation discarded %.3e of mass", discarded)
        accumulated = np.zeros_like(rows)
        current = rows
        for k in range(right + 1):
            if k >= left:
                accumulated += weights[k - left] * current
            if k < right:
                current = self.step(current)
        sums = accumulated.sum(axis=-1)
        defect = float(np.max(np.abs(sums - 1.0)))
        if defect > NORMALISATION_DEFECT:
            raise NumericalFailure(f"normalisation defect {defect:.3e} above 1e-9")
        return accumulated / np.expand_dims(sums, -1), discarded


def transient_distribution(
    params: ModelParams,
    initial: ProbabilityVector,
    t: float,
    tolerance: float = DEFAULT_TOLERANCE,
) -> ProbabilityVector:
    """
    Law of X_N(t) started from `initial`.

    Returns
    -------
    ProbabilityVector
        The transient law; `truncation_error` carries the discarded Poisson mass.
    """
    if len(initial) != params.N + 1:
        raise DomainError(f"initial law has {len(initial)} states, expected {params.N + 1}")
    if t < 0:
        raise DomainError(f"t must be non-negative, got {t}")
    if t == 0:
        return initial
    values, discarded = Uniformization(params, tolerance).advance(initial.values, t)
    return ProbabilityVector(values, truncation_error=discarded)


def transient_moments(
    params: ModelParams, x0: int, t: float, tolerance: float = DEFAULT_TOLERANCE
) -> tuple[float, float]:
    """Mean and variance of X_N(t) given X_N(0) = x0."""
    law = transient_distribution(
        params, ProbabilityVector.point_mass(params.N, x0), t, tolerance
    )
    return law.mean(), law.variance()


def _resolve_start_set(params: ModelParams, start_set, full_scan: bool) -> tuple:
    if start_set is None:
        start_set = range(params.N + 1) if full_scan else (0, params.N)
    starts = tuple(sorted(set(int(x) for x in start_set)))
    if not starts:
        raise DomainError("start_set must not be empty")
    if starts[0] < 0 or starts[-1] > params.N:
        raise DomainError(f"start_set {starts} outside {{0..{params.N}}}")
    return starts


def _point_masses(N: int, starts: Sequence[int]) -> np.ndarray:
    rows = np.zeros((len(starts), N + 1))
    rows[np.arange(len(starts)), list(starts)] = 1.0
    return rows


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise DomainError("times must be a non-empty 1-d sequence")
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise DomainError("times must be non-negative and increasing")
    return times


def _profile_chunk(args) -> tuple[np.ndarray, float]:
    params, starts, times, tolerance = args
    propagator = Uniformization(params, tolerance)
    pi = stationary_distribution(params).values
    rows = _point_masses(params.N, starts)
    distances = np.empty((len(starts), times.size))
    discarded = 0.0
    previous = 0.0
    for i, t in enumerate(times):
        rows, lost = propagator.advance(rows, t - previous)
        discarded += lost
        previous = t
        distances[:, i] = _tv_rows(rows, pi)
    return distances, discarded


def mixing_profile(
    params: ModelParams,
    times,
    start_set: Optional[Iterable[int]] = None,
    full_scan: bool = False,
    tolerance: float = DEFAULT_TOLERANCE,
    workers: int = 1,
) -> MixingProfile:
    """
    Worst-case distance ρ(t) = max over `start_set` of ‖P^t(x,·) − π‖_TV.

    Parameters
    ----------
    params : ModelParams
        The chain.
    times : Sequence[float]
        Increasing, non-negative times.
    start_set : Iterable[int], optional
        States maximised over; default {0, N}, or every state with `full_scan`.
    full_scan : bool
        Maximise over all states when no start set is given.
    tolerance : float
        Poisson truncation tolerance per advance.
    workers : int
        Threads sharing the start states; the result does not depend on it.

    Returns
    -------
    MixingProfile
        The profile.
    """
    times = _check_times(times)
    starts = _resolve_start_set(params, start_set, full_scan)
    n_chunks = min(workers, len(starts))
    chunks = [starts[i::n_chunks] for i in range(n_chunks)]
    results = ordered_map(
        _profile_chunk,
        [(params, chunk, times, tolerance) for chunk in chunks],
        workers=workers,
        kind="thread",
    )
    distances = np.empty((len(starts), times.size))
    order = [start for chunk in chunks for start in chunk]
    stacked = np.vstack([result[0] for result in results])
    for row, start in zip(stacked, order):
        distances[starts.index(start)] = row
    worst = np.argmax(distances, axis=0)
    return MixingProfile(
        times=times,
        rho=distances[worst, np.arange(times.size)],
        start_set=starts,
        worst_start=np.asarray(starts)[worst],
        truncation_error=sum(result[1] for result in results),
    )


def mixing_times(
    params: ModelParams,
    levels: Sequence[float],
    start_set: Optional[Iterable[int]] = None,
    full_scan: bool = False,
    tolerance: float = DEFAULT_TOLERANCE,
    resolution: float = 1e-4,
    step: Optional[float] = None,
) -> dict[float, float]:
    """
    First times the worst-case distance falls to each level.

    One forward pass over a coarse grid brackets every level; each bracket is
    then refined by bisection to width `resolution`. The grid starts inside
    [0, 4·t_N + 50/J].

    Returns
    -------
    dict[float, float]
        level -> inf{t : ρ(t) ≤ level}.
    """
    for level in levels:
        if not 0 < level < 1:
            raise DomainError(f"levels must lie in (0, 1), got {level}")
    d = derived(params)
    horizon = 4.0 * d.t_N + 50.0 / d.J
    if step is None:
        step = min(0.5 / d.J, horizon / 16.0)
    starts = _resolve_start_set(params, start_set, full_scan)
    propagator = Uniformization(params, tolerance)
    pi = stationary_distribution(params).values

    def rho(rows):
        return float(_tv_rows(rows, pi).max())

    rows = _point_masses(params.N, starts)
    result = {}
    pending = sorted(set(levels), reverse=True)
    current = rho(rows)
    for level in list(pending):
        if current <= level:
            result[level] = 0.0
            pending.remove(level)
    t = 0.0
    while pending:
        if t >= horizon:
            raise NumericalFailure(
                f"levels {pending} not reached within bracket [0, {horizon:.6g}]"
            )
        t_next = min(t + step, horizon)
        rows_next, _ = propagator.advance(rows, t_next - t)
        current = rho(rows_next)
        for level in [level for level in pending if current <= level]:
            lo, hi, rows_lo = t, t_next, rows
            while hi - lo > resolution:
                mid = 0.5 * (lo + hi)
                rows_mid, _ = propagator.advance(rows_lo, mid - lo)
                if rho(rows_mid) <= level:
                    hi = mid
                else:
                    lo, rows_lo = mid, rows_mid
            result[level] = hi
            pending.remove(level)
            logger.debug("N=%d level %.3g reached at t=%.6f", params.N, level, hi)
        t, rows = t_next, rows_next
    return {level: result[level] for level in levels}


def mixing_time(
    params: ModelParams,
    delta: float,
    start_set: Optional[Iterable[int]] = None,
    full_scan: bool = False,
    tolerance: float = DEFAULT_TOLERANCE,
) -> float:
    """
    t_MIX(delta) = inf{t : ρ(t) ≤ delta}, to absolute tolerance 1e−4.

    Examples
    --------
    >>> round(mixing_time(ModelParams(1.0, 2.0, 0.5, 1), 0.1, start_set={0}), 3)
    0.277
    """
    return mixing_times(params, [delta], start_set, full_scan, tolerance)[delta]


def pairwise_tv(
    params: ModelParams, x: int, y: int, times, tolerance: float = DEFAULT_TOLERANCE
) -> np.ndarray:
    """‖P^t(x,·) − P^t(y,·)‖_TV along increasing times."""
    times = _check_times(times)
    propagator = Uniformization(params, tolerance)
    rows = _point_masses(params.N, [x, y])
    distances = np.empty(times.size)
    previous = 0.0
    for i, t in enumerate(times):
        rows, _ = propagator.advance(rows, t - previous)
        previous = t
        distances[i] = tv_distance(rows[0], rows[1])
    return distances


def mean_decay(
    params: ModelParams,
    x0: int,
    c_values: Sequence[float],
    tolerance: float = DEFAULT_TOLERANCE,
) -> MeanDecay:
    """Exact means E_x0 X_N(t_N + c) and E_x0 X_N(t_N + c + 1) for each c."""
    d = derived(params)
    c_values = np.asarray(sorted(c_values), dtype=float)
    if np.any(d.t_N + c_values < 0):
        raise DomainError(f"t_N + c must be non-negative (t_N={d.t_N:.6g})")
    grid = sorted(set(np.concatenate((d.t_N + c_values, d.t_N + c_values + 1.0))))
    propagator = Uniformization(params, tolerance)
    row = ProbabilityVector.point_mass(params.N, x0).values
    states = np.arange(params.N + 1)
    means = {}
    previous = 0.0
    for t in grid:
        row, _ = propagator.advance(row, t - previous)
        previous = t
        means[t] = float(np.dot(states, row))
    return MeanDecay(
        c=c_values,
        mean_at_c=np.array([means[t] for t in d.t_N + c_values]),
        mean_at_c_plus_one=np.array([means[t] for t in d.t_N + c_values + 1.0]),
        x_star_N=d.x_star * params.N,
        stationary_mean=stationary_distribution(params).mean(),
    )


def spectral_gap(params: ModelParams) -> tuple[float, float]:
    """
    Spectral gap of −Q and the relaxation time 1/gap.

    Birth–death chains are reversible, so −Q is similar to the symmetric
    tridiagonal matrix with off-diagonal −sqrt(up(x)·down(x+1)).

    Examples
    --------
    >>> spectral_gap(ModelParams(1.0, 2.0, 0.5, 1))[0]  # doctest: +ELLIPSIS
    2.5...
    """
    down, up, diag = generator_bands(params)
    off_diagonal = -np.sqrt(up[:-1] * down[1:])
    eigenvalues = eigh_tridiagonal(
        -diag, off_diagonal, eigvals_only=True, select="i", select_range=(0, 1)
    )
    gap = float(eigenvalues[1])
    if gap <= 0:
        raise NumericalFailure(f"non-positive spectral gap {gap}")
    return gap, 1.0 / gap


def estimate_work(params: ModelParams, n_starts: int, horizon: float) -> float:
    """Rough element-operation count of advancing `n_starts` rows to `horizon`."""
    qt = uniformization_rate(params) * horizon
    return 6.0 * (params.N + 1) * n_starts * (qt + 12.0 * math.sqrt(qt) + 30.0)


def check_workload(
    params: ModelParams, n_starts: int, horizon: float, max_work: float, what: str
) -> float:
    """
    Refuse an exact computation whose `estimate_work` exceeds `max_work`.

    Returns
    -------
    float
        The estimate, when it is within budget.

    Raises
    ------
    InfeasibleWorkloadError
        If the estimate exceeds the budget.
    """
    work = estimate_work(params, n_starts, max(horizon, 0.0))
    if work > max_work:
        raise InfeasibleWorkloadError(what, work, max_work)
    logger.debug("%s: estimated work %.3e within budget %.3e", what, work, max_work)
    return work
