"""
Event-driven simulation of the chain.

Single paths, the reflected chain and coupled pairs are simulated event by
event from pre-drawn blocks of exponentials and uniforms. Ensembles of states
at fixed times (`sample_states`, `coupled_ensemble`) advance many replications
at once with numpy, one jump per replication per sweep, in chunks of
`streams.CHUNK_SIZE` replications with one random stream per chunk.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from epsistools.chain import ModelParams, c3_constant, derived, generator_bands
from epsistools.deterministic import ode_solution
from epsistools.errors import DomainError
from epsistools.exact import ProbabilityVector
from epsistools.streams import (
    COUPLED_STREAM,
    ENSEMBLE_STREAM,
    chunk_bounds,
    make_rng,
    ordered_map,
    replication_seed,
)

logger = logging.getLogger(__name__)

# uniforms and exponentials drawn per refill of a single-path simulation
BLOCK_SIZE = 4096


@dataclass(frozen=True)
class Trajectory:
    """
    Piecewise-constant path of the chain.

    Attributes
    ----------
    `times` : numpy.ndarray
        Event times, `times[0] = 0`, strictly increasing.
    `states` : numpy.ndarray
        State after each event, `states[0]` the initial state.
    `t_end` : float
        Observation horizon.
    `N` : int
        Population size.
    """

    times: np.ndarray
    states: np.ndarray
    t_end: float
    N: int

    @property
    def n_events(self) -> int:
        return self.states.size - 1

    def state_at(self, t):
        """State at time(s) t, right-continuous."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.t_end):
            raise DomainError(f"t must lie in [0, {self.t_end}], got {t}")
        index = np.searchsorted(self.times, t_arr, side="right") - 1
        states = self.states[index]
        return int(states) if states.ndim == 0 else states

    def durations(self) -> np.ndarray:
        """Holding time of every constant piece up to `t_end`."""
        return np.diff(np.append(self.times, self.t_end))


@dataclass(frozen=True)
class CouplingTrace:
    """
    Two copies W ≤ Z moving independently until they meet, together afterwards.

    `tau_couple` and `tau_exit` are `math.inf` for "not coalesced" and "did not
    exit" before the horizon.
    """

    w_trajectory: Trajectory
    z_trajectory: Trajectory
    tau_couple: float
    tau_exit: float

    def event_times(self) -> np.ndarray:
        return np.union1d(self.w_trajectory.times, self.z_trajectory.times)

    def is_monotone(self) -> bool:
        grid = self.event_times()
        return bool(
            np.all(self.w_trajectory.state_at(grid) <= self.z_trajectory.state_at(grid))
        )


class GoodSet:
    """
    Scaled interval I(r) = [x⋆ − r, x⋆ + r] in which the coupling contracts.

    Attributes
    ----------
    `params` : ModelParams
        The chain; its population size fixes the state boundaries.
    `r` : float
        Radius in proportion units.
    `h` : float
        Exponent in (0, 1) of the concentration scale N^h.

    Methods
    -------
    `default`
        Radius min(J/(12λ), x⋆/2, (1−x⋆)/2).
    `from_eta`
        Radius η(N) = 2(C₂+C₃)N^{−(1−h)/2}.
    `contains`
        Whether state(s) x satisfy x/N ∈ I(r).
    `interior`
        The good set of half the radius.
    `t_follow`
        (1/J)·⌈e^{C₁N^h}⌉.
    """

    def __init__(self, params: ModelParams, r: float, h: float = 0.5):
        self.params = params
        self.h = h
        self.r = r

    @property
    def r(self) -> float:
        return self._r

    @r.setter
    def r(self, value: float):
        value = float(value)
        # I(r) always contains x⋆; radii wider than [0, 1] are allowed
        if not math.isfinite(value) or value <= 0:
            raise DomainError(f"radius must be positive, got {value}")
        self._r = value

    @property
    def h(self) -> float:
        return self._h

    @h.setter
    def h(self, value: float):
        if not 0 < value < 1:
            raise DomainError(f"h must lie in (0, 1), got {value}")
        self._h = float(value)

    @classmethod
    def default(cls, params: ModelParams, h: float = 0.5) -> "GoodSet":
        d = derived(params)
        radius = min(d.J / (12.0 * params.lam), d.x_star / 2.0, (1.0 - d.x_star) / 2.0)
        return cls(params, radius, h)

    @staticmethod
    def eta(params: ModelParams, h: float = 0.5, c2: float = 1.0) -> float:
        """η(N) = 2(C₂+C₃)N^{−(1−h)/2}; C₂ has no explicit value and is supplied."""
        if c2 < 0:
            raise DomainError(f"c2 must be non-negative, got {c2}")
        return 2.0 * (c2 + c3_constant(params)) * params.N ** (-(1.0 - h) / 2.0)

    @classmethod
    def from_eta(cls, params: ModelParams, h: float = 0.5, c2: float = 1.0) -> "GoodSet":
        return cls(params, cls.eta(params, h, c2), h)

    @property
    def interval(self) -> tuple[float, float]:
        x_star = derived(self.params).x_star
        return x_star - self.r, x_star + self.r

    @property
    def lower_state(self) -> int:
        """ℓ = ⌈(x⋆−r)N⌉ − 1, the lower reflecting state (at least 0)."""
        return max(math.ceil(self.interval[0] * self.params.N) - 1, 0)

    @property
    def upper_state(self) -> int:
        """u = ⌊(x⋆+r)N⌋ + 1, the upper reflecting state (at most N)."""
        return min(math.floor(self.interval[1] * self.params.N) + 1, self.params.N)

    def contains(self, x):
        lo, hi = self.interval
        scaled = np.asarray(x, dtype=float) / self.params.N
        inside = (scaled >= lo) & (scaled <= hi)
        return bool(inside) if inside.ndim == 0 else inside

    def interior(self) -> "GoodSet":
        return GoodSet(self.params, self.r / 2.0, self.h)

    def t_follow(self, c1: float) -> float:
        try:
            return math.ceil(math.exp(c1 * self.params.N**self.h)) / derived(self.params).J
        except OverflowError:
            return math.inf

    def __repr__(self) -> str:
        return f"GoodSet(r={self.r!r}, h={self.h!r}, N={self.params.N!r})"


def _rate_tables(params: ModelParams) -> tuple[list, list]:
    down, up, _ = generator_bands(params)
    return up.tolist(), down.tolist()


def _check_state(params: ModelParams, x: int, name: str = "x0") -> int:
    if int(x) != x or not 0 <= x <= params.N:
        raise DomainError(f"{name}={x} outside {{0..{params.N}}}")
    return int(x)


def _check_horizon(t_max: float) -> float:
    if not t_max >= 0 or math.isinf(t_max):
        raise DomainError(f"t_max must be finite and non-negative, got {t_max}")
    return float(t_max)


def _ssa(up: list, down: list, x0: int, t_max: float, rng) -> tuple[list, list]:
    times, states = [0.0], [x0]
    t, x = 0.0, x0
    position = BLOCK_SIZE
    while True:
        if position == BLOCK_SIZE:
            holds = rng.standard_exponential(BLOCK_SIZE).tolist()
            branches = rng.random(BLOCK_SIZE).tolist()
            position = 0
        birth = up[x]
        total = birth + down[x]
        t += holds[position] / total
        if t > t_max:
            break
        x += 1 if branches[position] * total < birth else -1
        position += 1
        times.append(t)
        states.append(x)
    return times, states


def _trajectory(params: ModelParams, times: list, states: list, t_max: float):
    return Trajectory(
        times=np.asarray(times, dtype=float),
        states=np.asarray(states, dtype=np.int64),
        t_end=t_max,
        N=params.N,
    )


def simulate_path(params: ModelParams, x0: int, t_max: float, seed) -> Trajectory:
    """
    Exact path of X_N on [0, t_max] (Gillespie's direct method).

    Parameters
    ----------
    params : ModelParams
        The chain.
    x0 : int
        Initial state.
    t_max : float
        Horizon.
    seed : int | numpy.random.SeedSequence | numpy.random.Generator
        Replication seed; equal seeds give bit-identical paths.

    Returns
    -------
    Trajectory
        The path.
    """
    x0 = _check_state(params, x0)
    t_max = _check_horizon(t_max)
    up, down = _rate_tables(params)
    times, states = _ssa(up, down, x0, t_max, make_rng(seed))
    return _trajectory(params, times, states, t_max)


def simulate_reflected(
    params: ModelParams, x0: int, radius: float, t_max: float, seed
) -> Trajectory:
    """
    Path of the chain reflected at the boundary of the good set I(r).

    Interior rates are those of the free chain; from u = ⌊(x⋆+r)N⌋+1 the chain
    only moves down and from ℓ = ⌈(x⋆−r)N⌉−1 only up. With the same seed the
    reflected and free paths coincide up to the first exit of I(r).
    """
    good_set = GoodSet(params, radius)
    x0 = _check_state(params, x0)
    lo, hi = good_set.interval
    slack = 1e-12
    if not lo - slack <= x0 / params.N <= hi + slack:
        raise DomainError(f"x0={x0} outside the good set [{lo:.6g}, {hi:.6g}]")
    t_max = _check_horizon(t_max)
    up, down = _rate_tables(params)
    lower, upper = good_set.lower_state, good_set.upper_state
    up[upper] = 0.0
    down[lower] = 0.0
    times, states = _ssa(up, down, x0, t_max, make_rng(seed))
    return _trajectory(params, times, states, t_max)


def simulate_coupled(
    params: ModelParams,
    w0: int,
    z0: int,
    t_max: float,
    good_set: Optional[GoodSet],
    seed,
    exit_after: float = 0.0,
) -> CouplingTrace:
    """
    Coupled pair (W, Z) as one two-dimensional jump process.

    Until they meet, the four moves (w±1, z) and (w, z±1) happen at the rates
    of the single chain in each coordinate, so no two jumps are simultaneous.
    From the meeting time on both coordinates make the same jumps.

    Parameters
    ----------
    params : ModelParams
        The chain.
    w0, z0 : int
        Initial states with w0 ≤ z0.
    t_max : float
        Horizon.
    good_set : GoodSet, optional
        Interval whose first exit (by either copy, at or after `exit_after`)
        is recorded; defaults to `GoodSet.default`.
    seed : int | numpy.random.SeedSequence | numpy.random.Generator
        Replication seed.
    exit_after : float
        Start of the exit watch.

    Returns
    -------
    CouplingTrace
        Both paths with the coalescence and exit times.
    """
    w0 = _check_state(params, w0, "w0")
    z0 = _check_state(params, z0, "z0")
    if w0 > z0:
        raise DomainError(f"need w0 ≤ z0, got w0={w0}, z0={z0}")
    t_max = _check_horizon(t_max)
    if good_set is None:
        good_set = GoodSet.default(params)
    up, down = _rate_tables(params)
    rng = make_rng(seed)
    w_times, w_states, z_times, z_states = [0.0], [w0], [0.0], [z0]
    t, w, z = 0.0, w0, z0
    tau_couple = 0.0 if w == z else math.inf
    position = BLOCK_SIZE
    while True:
        if position == BLOCK_SIZE:
            holds = rng.standard_exponential(BLOCK_SIZE).tolist()
            branches = rng.random(BLOCK_SIZE).tolist()
            position = 0
        if w == z:
            birth = up[w]
            total = birth + down[w]
            t += holds[position] / total
            if t > t_max:
                break
            w = z = w + (1 if branches[position] * total < birth else -1)
            w_times.append(t)
            w_states.append(w)
            z_times.append(t)
            z_states.append(z)
        else:
            rates = (up[w], down[w], up[z], down[z])
            total = rates[0] + rates[1] + rates[2] + rates[3]
            t += holds[position] / total
            if t > t_max:
                break
            pick = branches[position] * total
            if pick < rates[0] + rates[1]:
                w += 1 if pick < rates[0] else -1
                w_times.append(t)
                w_states.append(w)
            else:
                z += 1 if pick < rates[0] + rates[1] + rates[2] else -1
                z_times.append(t)
                z_states.append(z)
            if w == z:
                tau_couple = t
        position += 1
    w_trajectory = _trajectory(params, w_times, w_states, t_max)
    z_trajectory = _trajectory(params, z_times, z_states, t_max)
    tau_exit = min(
        exit_time(w_trajectory, good_set, after=exit_after),
        exit_time(z_trajectory, good_set, after=exit_after),
    )
    return CouplingTrace(w_trajectory, z_trajectory, tau_couple, tau_exit)


def exit_time(traj: Trajectory, interval, after: float = 0.0) -> float:
    """
    First time t ≥ `after` with X(t)/N outside the interval.

    Parameters
    ----------
    traj : Trajectory
        The path.
    interval : GoodSet | tuple[float, float]
        Good set or (low, high) in proportion units.
    after : float
        Start of the watch.

    Returns
    -------
    float
        The exit time, `math.inf` if the path stays inside up to `t_end`.
    """
    lo, hi = interval.interval if isinstance(interval, GoodSet) else interval
    if after > traj.t_end:
        return math.inf
    scaled = traj.states / traj.N
    outside = (scaled < lo) | (scaled > hi)
    start = np.searchsorted(traj.times, after, side="right") - 1
    if outside[start]:
        return float(after)
    later = np.flatnonzero(outside[start + 1 :])
    if later.size == 0:
        return math.inf
    return float(traj.times[start + 1 + later[0]])


def sup_deviation(traj: Trajectory, params: ModelParams) -> float:
    """
    sup over [0, t_end] of |X_N(t)/N − x(t)|, x the ODE solution from X_N(0)/N.

    X_N is constant between events and x is monotone, so the supremum over each
    piece is attained at one of its two ends.
    """
    ends = np.append(traj.times, traj.t_end)
    ode = ode_solution(params, traj.states[0] / params.N, ends)
    scaled = traj.states / params.N
    left = np.abs(scaled - ode[:-1])
    right = np.abs(scaled - ode[1:])
    return float(max(left.max(), right.max()))


@dataclass(frozen=True)
class MartingalePath:
    """
    Centred martingale of Y = X/N − x⋆ along a path and its discounted integrals.

    Values are given at `times` (event times, then `t_end`): `martingale`
    M(t) = Y(t) − Y(0) + ∫(λY² + JY) ds, `discounted` ∫e^{−J(t−s)} dM(s) and
    `quadratic` ∫λe^{−J(t−s)}Y² ds, so that
    Y(t) = e^{−Jt}Y(0) − quadratic(t) + discounted(t).
    """

    times: np.ndarray
    y: np.ndarray
    martingale: np.ndarray
    discounted: np.ndarray
    quadratic: np.ndarray
    threshold: float
    J: float
    lam: float = field(repr=False)

    def at(self, t: float) -> float:
        """M(t) at any t in [0, t_end]."""
        if not 0 <= t <= self.times[-1]:
            raise DomainError(f"t must lie in [0, {self.times[-1]}], got {t}")
        i = min(int(np.searchsorted(self.times, t, side="right")) - 1, self.y.size - 1)
        y = self.y[i]
        return float(self.martingale[i] + (self.lam * y * y + self.J * y) * (t - self.times[i]))

    def representation_residual(self) -> float:
        """Largest deviation from Y(t) = e^{−Jt}Y(0) − quadratic + discounted."""
        y_values = np.append(self.y, self.y[-1])
        rebuilt = np.exp(-self.J * self.times) * self.y[0] - self.quadratic + self.discounted
        return float(np.max(np.abs(y_values - rebuilt)))


def martingale_functional(
    traj: Trajectory, params: ModelParams, h: float = 0.5
) -> MartingalePath:
    """
    Evaluate the centred martingale and its exponentially discounted integral.

    The compensator is integrated exactly over each constant piece. The
    threshold e·√(ωk/N) with ω = 4(log 2)²kN^h is the scale of the discounted
    integral over one time unit.

    Parameters
    ----------
    traj : Trajectory
        Path from `simulate_path`.
    params : ModelParams
        The chain.
    h : float
        Exponent of the concentration scale.

    Returns
    -------
    MartingalePath
        The martingale and integrals at every event time and at `t_end`.
    """
    d = derived(params)
    lam, J = params.lam, d.J
    y = traj.states / params.N - d.x_star
    ends = np.append(traj.times, traj.t_end)
    durations = np.diff(ends)
    compensator_rate = lam * y * y + J * y
    compensator = np.concatenate(([0.0], np.cumsum(compensator_rate * durations)))
    y_at_ends = np.append(y, y[-1])
    martingale = y_at_ends - y[0] + compensator

    decay = np.exp(-J * durations)
    growth = -np.expm1(-J * durations) / J
    discounted = np.empty(ends.size)
    quadratic = np.empty(ends.size)
    discounted[0] = quadratic[0] = 0.0
    jumps = np.append(np.diff(y), 0.0)
    for i in range(durations.size):
        discounted[i + 1] = decay[i] * discounted[i] + compensator_rate[i] * growth[i] + jumps[i]
        quadratic[i + 1] = decay[i] * quadratic[i] + lam * y[i] * y[i] * growth[i]

    omega = 4.0 * math.log(2.0) ** 2 * d.k * params.N**h
    return MartingalePath(
        times=ends,
        y=y,
        martingale=martingale,
        discounted=discounted,
        quadratic=quadratic,
        threshold=math.e * math.sqrt(omega * d.k / params.N),
        J=J,
        lam=lam,
    )


def occupation_frequencies(traj: Trajectory, lower: int, upper: int) -> ProbabilityVector:
    """Share of [0, t_end] spent in each state of {lower..upper}."""
    if traj.t_end <= 0:
        raise DomainError("occupation frequencies need a positive horizon")
    if traj.states.min() < lower or traj.states.max() > upper:
        raise DomainError(f"path leaves {{{lower}..{upper}}}")
    weights = np.bincount(
        traj.states - lower, weights=traj.durations(), minlength=upper - lower + 1
    )
    return ProbabilityVector(weights / weights.sum())


def _check_observation_times(times, t_max: Optional[float] = None) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise DomainError("observation times must be non-negative and increasing")
    if t_max is not None and times.size and times[-1] > t_max:
        raise DomainError(f"observation time {times[-1]} beyond horizon {t_max}")
    return times


def _record_crossings(record, slot, t_next, checkpoints, active, *values):
    # store current values at every checkpoint passed before the next jump
    for _ in range(checkpoints.size):
        pending = active & (slot < checkpoints.size)
        pending[pending] &= t_next[pending] > checkpoints[slot[pending]]
        if not pending.any():
            return
        rows = np.flatnonzero(pending)
        for target, value in zip(record, values):
            target[rows, slot[rows]] = value[rows]
        slot[rows] += 1


def _sample_chunk(args) -> np.ndarray:
    params, x0, times, master_seed, chunk, size = args
    rng = make_rng(replication_seed(master_seed, chunk, ENSEMBLE_STREAM))
    down, up, _ = generator_bands(params)
    x = np.full(size, x0, dtype=np.int64)
    t = np.zeros(size)
    slot = np.zeros(size, dtype=np.int64)
    states = np.empty((size, times.size), dtype=np.int64)
    active = np.ones(size, dtype=bool)
    t_max = times[-1] if times.size else 0.0
    while active.any():
        rows = np.flatnonzero(active)
        birth = up[x[rows]]
        total = birth + down[x[rows]]
        t_next = np.zeros(size)
        t_next[rows] = t[rows] + rng.standard_exponential(rows.size) / total
        moves = np.where(rng.random(rows.size) * total < birth, 1, -1)
        _record_crossings([states], slot, t_next, times, active, x)
        done = t_next[rows] > t_max
        active[rows[done]] = False
        live = rows[~done]
        x[live] += moves[~done]
        t[live] = t_next[live]
    return states


def sample_states(
    params: ModelParams,
    x0: int,
    times: Sequence[float],
    replications: int,
    master_seed: int,
    workers: int = 1,
) -> np.ndarray:
    """
    States X_N(t) at the observation times for independent replications.

    Returns
    -------
    numpy.ndarray
        Integer array of shape (replications, len(times)).
    """
    x0 = _check_state(params, x0)
    times = _check_observation_times(times)
    if replications < 1:
        raise DomainError(f"replications must be at least 1, got {replications}")
    chunks = chunk_bounds(replications)
    logger.debug("sampling %d replications in %d chunks", replications, len(chunks))
    results = ordered_map(
        _sample_chunk,
        [(params, x0, times, master_seed, c, stop - start) for c, start, stop in chunks],
        workers=workers,
    )
    return np.vstack(results)


@dataclass(frozen=True)
class CoupledEnsemble:
    """
    Outcome of many coupled replications.

    `w_states`/`z_states` have shape (replications, len(checkpoints));
    `tau_couple`/`tau_exit` hold `math.inf` when the event did not happen.
    """

    checkpoints: np.ndarray
    w_states: np.ndarray
    z_states: np.ndarray
    tau_couple: np.ndarray
    tau_exit: np.ndarray

    @property
    def replications(self) -> int:
        return self.tau_couple.size


def _coupled_chunk(args):
    (params, w0, z0, t_max, bounds, exit_after, checkpoints, release_after,
     master_seed, chunk, size) = args
    rng = make_rng(replication_seed(master_seed, chunk, COUPLED_STREAM))
    down, up, _ = generator_bands(params)
    lo, hi = bounds
    w = np.full(size, w0, dtype=np.int64)
    z = np.full(size, z0, dtype=np.int64)
    t = np.zeros(size)
    slot = np.zeros(size, dtype=np.int64)
    w_states = np.empty((size, checkpoints.size), dtype=np.int64)
    z_states = np.empty((size, checkpoints.size), dtype=np.int64)
    tau_couple = np.full(size, 0.0 if w0 == z0 else math.inf)
    tau_exit = np.full(size, math.inf)
    watching = np.zeros(size, dtype=bool)
    active = np.ones(size, dtype=bool)

    def outside(states):
        scaled = states / params.N
        return (scaled < lo) | (scaled > hi)

    while active.any():
        rows = np.flatnonzero(active)
        wr, zr = w[rows], z[rows]
        merged = wr == zr
        rates = np.stack([up[wr], down[wr], up[zr], down[zr]])
        rates[2:, merged] = 0.0
        total = rates.sum(axis=0)
        t_next = np.zeros(size)
        t_next[rows] = t[rows] + rng.standard_exponential(rows.size) / total
        pick = rng.random(rows.size) * total
        _record_crossings([w_states, z_states], slot, t_next, checkpoints, active, w, z)

        arming = active & ~watching & (t_next > exit_after)
        arming[arming] &= exit_after <= t_max
        hit = arming & np.isinf(tau_exit) & (outside(w) | outside(z))
        tau_exit[hit] = exit_after
        watching |= arming

        done = t_next[rows] > t_max
        active[rows[done]] = False
        keep = ~done
        live = rows[keep]
        cumulative = np.cumsum(rates[:, keep], axis=0)
        choice = (pick[keep] >= cumulative[:3]).sum(axis=0)
        w_step = np.select([choice == 0, choice == 1], [1, -1], 0)
        z_step = np.select([choice == 2, choice == 3], [1, -1], 0)
        both = merged[keep]
        z_step[both] = w_step[both]
        w[live] += w_step
        z[live] += z_step
        t[live] = t_next[live]

        met = live[np.isinf(tau_couple[live]) & (w[live] == z[live])]
        tau_couple[met] = t[met]
        exited = live[watching[live] & np.isinf(tau_exit[live])]
        exited = exited[outside(w[exited]) | outside(z[exited])]
        tau_exit[exited] = t[exited]
        if release_after is not None:
            retire = live[(w[live] == z[live]) & (t[live] >= release_after)]
            active[retire] = False
    return w_states, z_states, tau_couple, tau_exit


def coupled_ensemble(
    params: ModelParams,
    w0: int,
    z0: int,
    t_max: float,
    replications: int,
    master_seed: int,
    good_set: Optional[GoodSet] = None,
    exit_after: float = 0.0,
    checkpoints: Iterable[float] = (),
    release_after: Optional[float] = None,
    workers: int = 1,
) -> CoupledEnsemble:
    """
    Vectorised coupled replications with coalescence, exit and checkpoint states.

    Parameters
    ----------
    params : ModelParams
        The chain.
    w0, z0 : int
        Initial states, w0 ≤ z0.
    t_max : float
        Horizon.
    replications : int
        Number of independent coupled pairs.
    master_seed : int
        Master seed; chunk c draws from stream (COUPLED_STREAM, c).
    good_set : GoodSet, optional
        Interval watched for exits; defaults to `GoodSet.default`.
    exit_after : float
        Exits are recorded from this time on.
    checkpoints : Iterable[float]
        Increasing times at which (W, Z) is stored.
    release_after : float, optional
        Coalesced replications stop once their clock passes this time, which
        must not precede the last checkpoint; the horizon applies otherwise.
    workers : int
        Process workers; results do not depend on it.

    Returns
    -------
    CoupledEnsemble
        Per-replication outcomes in replication order.
    """
    w0 = _check_state(params, w0, "w0")
    z0 = _check_state(params, z0, "z0")
    if w0 > z0:
        raise DomainError(f"need w0 ≤ z0, got w0={w0}, z0={z0}")
    t_max = _check_horizon(t_max)
    checkpoints = _check_observation_times(list(checkpoints), t_max)
    if release_after is not None and checkpoints.size and release_after < checkpoints[-1]:
        raise DomainError("release_after must not precede the last checkpoint")
    if replications < 1:
        raise DomainError(f"replications must be at least 1, got {replications}")
    if good_set is None:
        good_set = GoodSet.default(params)
    items = [
        (params, w0, z0, t_max, good_set.interval, exit_after, checkpoints,
         release_after, master_seed, c, stop - start)
        for c, start, stop in chunk_bounds(replications)
    ]
    results = ordered_map(_coupled_chunk, items, workers=workers)
    return CoupledEnsemble(
        checkpoints=checkpoints,
        w_states=np.vstack([r[0] for r in results]),
        z_states=np.vstack([r[1] for r in results]),
        tau_couple=np.concatenate([r[2] for r in results]),
        tau_exit=np.concatenate([r[3] for r in results]),
    )


def trajectories_frame(trajectories: Sequence[Trajectory]) -> pd.DataFrame:
    """Long table (replication, event_index, time, state) of several paths."""
    frames = [
        pd.DataFrame(
            {
                "replication": index,
                "event_index": np.arange(traj.states.size),
                "time": traj.times,
                "state": traj.states,
            }
        )
        for index, traj in enumerate(trajectories)
    ]
    if not frames:
        return pd.DataFrame(columns=["replication", "event_index", "time", "state"])
    return pd.concat(frames, ignore_index=True)


def write_trajectories_csv(path, trajectories: Sequence[Trajectory]) -> None:
    """Dump paths as CSV with times at 17 significant digits."""
    trajectories_frame(trajectories).to_csv(
        path, index=False, float_format="%.17g", lineterminator="\n"
    )
