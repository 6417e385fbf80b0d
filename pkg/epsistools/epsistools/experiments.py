"""
Verification experiments built on the exact and simulation layers.

Every experiment returns an `ExperimentResult`: named pandas tables plus a
summary of fitted parameters and pass/fail flags. Unknown theory constants
(C₂, C₄, K₁, C*) are inputs, never truths; the checks look at exponents,
scaling shapes and bounded ratios.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import binomtest, linregress
from scipy.stats import t as student_t

from epsistools.chain import ModelParams, derived
from epsistools.errors import DomainError
from epsistools.exact import (
    DEFAULT_TOLERANCE,
    ProbabilityVector,
    check_workload,
    mean_decay,
    mixing_times,
    pairwise_tv,
    stationary_distribution,
    transient_distribution,
    tv_distance,
)
from epsistools.simulate import (
    GoodSet,
    coupled_ensemble,
    simulate_path,
    sup_deviation,
)
from epsistools.streams import SINGLE_STREAM, ordered_map, replication_seed

logger = logging.getLogger(__name__)

DELTA_LEVELS = (0.9, 0.75, 0.5, 0.25, 0.1)
FIT_LEVEL = 0.25
# largest N for which the full start set is the default recommendation
FULL_SCAN_LIMIT = 200


@dataclass
class ExperimentResult:
    """
    Output of one experiment.

    Attributes
    ----------
    `name` : str
        Experiment name, used as the output file prefix.
    `tables` : dict[str, pandas.DataFrame]
        Result tables by name.
    `summary` : dict
        Fitted parameters and pass/fail flags.
    """

    name: str
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


@dataclass
class CutoffReport:
    """
    Mixing times over a range of N with the fitted cutoff location.

    `table` holds one row per N with columns `N`, `t_N`, `t_mix_<δ>` for every
    level and `window` = t_mix(smallest δ) − t_mix(largest δ).
    """

    table: pd.DataFrame
    levels: tuple
    slope: float
    intercept: float
    predicted_slope: float

    @property
    def window_ratio(self) -> float:
        windows = self.table["window"].to_numpy()
        return float(windows[-1] / windows[0])

    def to_result(self) -> ExperimentResult:
        relative_error = abs(self.slope - self.predicted_slope) / self.predicted_slope
        columns = [f"t_mix_{level:g}" for level in self.levels]
        decreasing = bool(np.all(np.diff(self.table[columns].to_numpy(), axis=1) >= 0))
        fit_column = f"t_mix_{FIT_LEVEL:g}"
        large = self.table[self.table["N"] >= 800]
        sandwich = None
        if fit_column in self.table and not large.empty:
            sandwich = bool(
                np.all(np.abs(large[fit_column] - large["t_N"]) <= large["window"])
            )
        return ExperimentResult(
            name="cutoff-scan",
            tables={"mixing_times": self.table},
            summary={
                "slope": self.slope,
                "intercept": self.intercept,
                "predicted_slope": self.predicted_slope,
                "slope_relative_error": relative_error,
                "slope_within_15pct": bool(relative_error <= 0.15),
                "window_ratio": self.window_ratio,
                "window_ratio_ok": bool(self.window_ratio <= 1.5),
                "t_mix_decreasing_in_delta": decreasing,
                "windows_positive": bool(np.all(self.table["window"] > 0)),
                "sandwich_ok": sandwich,
            },
        )


@dataclass
class PhaseReport:
    """
    Frequencies of the three coupling phases with Wilson intervals.

    Each phase is described by (successes, trials); trials are the runs that
    reached the phase in the required condition.
    """

    N: int
    xi: float
    phase_times: tuple
    burn_in: tuple
    intermediate: tuple
    final: tuple
    coalesced: tuple
    level: float = 0.05

    def frequency(self, phase: str) -> float:
        successes, trials = getattr(self, phase)
        return successes / trials if trials else math.nan

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for phase, at in zip(
            ("burn_in", "intermediate", "final", "coalesced"),
            (self.phase_times[0], self.phase_times[1], self.phase_times[2], self.phase_times[2]),
        ):
            successes, trials = getattr(self, phase)
            low, high = wilson_interval(successes, trials, 1.0 - self.level)
            rows.append(
                {
                    "N": self.N,
                    "xi": self.xi,
                    "phase": phase,
                    "time": at,
                    "successes": successes,
                    "trials": trials,
                    "frequency": self.frequency(phase),
                    "ci_low": low,
                    "ci_high": high,
                }
            )
        return pd.DataFrame(rows)


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """
    Wilson score interval of a binomial proportion.

    Examples
    --------
    >>> wilson_interval(0, 0)
    (0.0, 1.0)
    """
    if n == 0:
        return 0.0, 1.0
    if not 0 <= successes <= n:
        raise DomainError(f"need 0 ≤ successes ≤ n, got {successes} of {n}")
    ci = binomtest(int(successes), int(n)).proportion_ci(
        confidence_level=confidence, method="wilson"
    )
    return float(ci.low), float(ci.high)


def psi1(params: ModelParams, xi, c4: float = 1.0):
    """ψ₁(ξ) = 4/√(μ∧ε)·ξ^{−1/2} + C₄e^{−Jξ/2}."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise DomainError(f"xi must be positive, got {xi}")
    J = derived(params).J
    value = 4.0 / math.sqrt(min(params.mu, params.epsilon)) / np.sqrt(xi) + c4 * np.exp(
        -J * xi / 2.0
    )
    return float(value) if value.ndim == 0 else value


def _separation_term(params: ModelParams, xi):
    J = derived(params).J
    total = params.lam + params.mu + params.epsilon
    return np.exp(-J * np.asarray(xi, dtype=float) ** 2 / (3.0 * total))


def psi2_composite(params: ModelParams, xi, c4: float = 1.0):
    """ψ₁(ξ) + 6e^{−Jξ²/(3(λ+μ+ε))}, the composite in the lower-bound argument."""
    value = psi1(params, xi, c4) + 6.0 * _separation_term(params, xi)
    return float(value) if np.ndim(value) == 0 else value


def _check_increasing(N_list: Sequence[int]) -> list[int]:
    N_list = [int(N) for N in N_list]
    if not N_list or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise DomainError(f"N_list must be non-empty and increasing, got {N_list}")
    return N_list


def _mixing_row(args) -> dict:
    params, levels, full_scan, tolerance = args
    d = derived(params)
    t_mix = mixing_times(params, levels, full_scan=full_scan, tolerance=tolerance)
    logger.info("N=%d: t_mix=%s", params.N, {k: round(v, 4) for k, v in t_mix.items()})
    row = {"N": params.N, "t_N": d.t_N}
    row.update({f"t_mix_{level:g}": t_mix[level] for level in levels})
    row["window"] = t_mix[min(levels)] - t_mix[max(levels)]
    return row


def cutoff_scan(
    params: ModelParams,
    N_list: Sequence[int],
    delta_levels: Sequence[float] = DELTA_LEVELS,
    full_scan: bool = False,
    max_work: float = 5e10,
    tolerance: float = DEFAULT_TOLERANCE,
    workers: int = 1,
) -> CutoffReport:
    """
    Exact mixing times for every N and the fitted location of the cutoff.

    t_mix(N, 0.25) is fitted as a·log N + b by least squares and a is compared
    with 1/(2J).

    Parameters
    ----------
    params : ModelParams
        Template; its N is replaced by each entry of `N_list`.
    N_list : Sequence[int]
        Increasing population sizes.
    delta_levels : Sequence[float]
        Distance levels.
    full_scan : bool
        Maximise over every start state instead of {0, N}.
    max_work : float
        Budget of `estimate_work`; larger N are refused.
    tolerance : float
        Poisson truncation tolerance.
    workers : int
        Threads over N.

    Returns
    -------
    CutoffReport
        Mixing times, windows and the fit.
    """
    N_list = _check_increasing(N_list)
    levels = tuple(sorted(set(float(level) for level in delta_levels), reverse=True))
    for N in N_list:
        scaled = params.with_population(N)
        d = derived(scaled)
        starts = N + 1 if full_scan else 2
        check_workload(
            scaled, starts, 4.0 * d.t_N + 50.0 / d.J, max_work, f"cutoff scan at N={N}"
        )
        if not full_scan and N > FULL_SCAN_LIMIT:
            logger.warning("N=%d: maximising over the start set {0, N} only", N)
    rows = ordered_map(
        _mixing_row,
        [(params.with_population(N), levels, full_scan, tolerance) for N in N_list],
        workers=workers,
        kind="thread",
    )
    table = pd.DataFrame(rows)
    fit_column = f"t_mix_{FIT_LEVEL:g}"
    slope = intercept = math.nan
    if len(N_list) >= 2 and fit_column in table:
        fit = linregress(np.log(table["N"].to_numpy(float)), table[fit_column].to_numpy())
        slope, intercept = float(fit.slope), float(fit.intercept)
    elif fit_column in table:
        intercept = float(table[fit_column].iloc[0])
    return CutoffReport(
        table=table,
        levels=levels,
        slope=slope,
        intercept=intercept,
        predicted_slope=1.0 / (2.0 * derived(params).J),
    )


def _deviation_task(args) -> float:
    params, x0, horizon, master_seed, index = args
    traj = simulate_path(
        params, x0, horizon, replication_seed(master_seed, index, SINGLE_STREAM)
    )
    return sup_deviation(traj, params)


def _log_log_fit(N_values, values, confidence: float = 0.95) -> dict:
    x = np.log(np.asarray(N_values, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if x.size < 2:
        return {"slope": math.nan, "slope_ci_low": math.nan, "slope_ci_high": math.nan}
    fit = linregress(x, y)
    if x.size > 2:
        half = student_t.ppf(0.5 + confidence / 2.0, x.size - 2) * fit.stderr
    else:
        half = 0.0
    return {
        "slope": float(fit.slope),
        "slope_ci_low": float(fit.slope - half),
        "slope_ci_high": float(fit.slope + half),
    }


def concentration_scan(
    params: ModelParams,
    N_list: Sequence[int],
    replications: int,
    master_seed: int,
    horizon: Optional[float] = None,
    start_fraction: float = 0.0,
    workers: int = 1,
) -> ExperimentResult:
    """
    Median and 95th percentile of the sup-deviation from the ODE over N.

    Each replication starts at round(start_fraction·N) and runs to `horizon`,
    by default (1/J)·log N. The log-log slope of the median is fitted.
    """
    N_list = _check_increasing(N_list)
    if replications < 100:
        raise DomainError(f"replications must be at least 100, got {replications}")
    if not 0 <= start_fraction <= 1:
        raise DomainError(f"start_fraction must lie in [0, 1], got {start_fraction}")
    rows = []
    for N in N_list:
        scaled = params.with_population(N)
        t_end = horizon if horizon is not None else math.log(N) / derived(scaled).J
        x0 = int(round(start_fraction * N))
        deviations = np.asarray(
            ordered_map(
                _deviation_task,
                [(scaled, x0, t_end, master_seed, i) for i in range(replications)],
                workers=workers,
            )
        )
        logger.info("N=%d: median sup-deviation %.5f", N, np.median(deviations))
        rows.append(
            {
                "N": N,
                "horizon": t_end,
                "replications": replications,
                "median": float(np.median(deviations)),
                "p95": float(np.quantile(deviations, 0.95)),
                "max": float(deviations.max()),
            }
        )
    table = pd.DataFrame(rows)
    summary = _log_log_fit(table["N"], table["median"])
    summary["slope_ok"] = bool(abs(summary["slope"] + 0.5) <= 0.1)
    summary["p95_decreasing"] = bool(np.all(np.diff(table["p95"]) < 0))
    return ExperimentResult("concentration-scan", {"deviations": table}, summary)


def coupling_tail(
    params: ModelParams,
    N: int,
    w0: int,
    z0: int,
    xi_grid: Sequence[float],
    replications: int,
    master_seed: int,
    c4: float = 1.0,
    level: float = 0.05,
    workers: int = 1,
) -> ExperimentResult:
    """
    Empirical tail P(τ_couple > t_N + ξ) against the functional form ψ₁(ξ).

    The dominant term 4/√(μ∧ε)·ξ^{−1/2} is checked with a slack factor 2.
    """
    xi_grid = np.asarray(sorted(xi_grid), dtype=float)
    if xi_grid.size == 0 or np.any(xi_grid <= 0):
        raise DomainError(f"xi values must be positive, got {xi_grid}")
    scaled = params.with_population(N)
    t_N = derived(scaled).t_N
    ensemble = coupled_ensemble(
        scaled, w0, z0, t_N + xi_grid[-1], replications, master_seed,
        release_after=0.0, workers=workers,
    )
    dominant = 4.0 / math.sqrt(min(params.mu, params.epsilon)) / np.sqrt(xi_grid)
    rows = []
    for xi, term in zip(xi_grid, dominant):
        failures = int(np.sum(ensemble.tau_couple > t_N + xi))
        low, high = wilson_interval(failures, replications, 1.0 - level)
        rows.append(
            {
                "N": N,
                "xi": xi,
                "t": t_N + xi,
                "tail": failures / replications,
                "ci_low": low,
                "ci_high": high,
                "psi1": psi1(params, xi, c4),
                "dominant_term": term,
                "dominant_ok": bool(failures / replications <= 2.0 * term),
            }
        )
    table = pd.DataFrame(rows)
    summary = {
        "tail_non_increasing": bool(np.all(np.diff(table["tail"]) <= 0)),
        "dominant_ok": bool(table["dominant_ok"].all()),
        "c4": c4,
    }
    return ExperimentResult("coupling-tail", {"tail": table}, summary)


def phase_verification(
    params: ModelParams,
    N: int,
    xi: float,
    replications: int,
    master_seed: int,
    h: float = 0.5,
    c2: float = 1.0,
    level: float = 0.05,
    workers: int = 1,
) -> PhaseReport:
    """
    Success frequencies of the burn-in, intermediate and final coupling phases.

    Copies start at 0 and N. With S̃ = I(η/2) and exits of I(η) watched from
    T1 on:

    * burn-in: both copies in S̃ at T1 = ((1−h)/(2J))·log N;
    * intermediate: among burn-in successes still inside at T2 = t_N + ξ/2,
      those with Z − W ≤ √N at T2;
    * final: among intermediate successes, those not failing by
      T3 = t_N + ξ, failure meaning neither coalesced nor exited.
    """
    if xi <= 0:
        raise DomainError(f"xi must be positive, got {xi}")
    scaled = params.with_population(N)
    d = derived(scaled)
    good_set = GoodSet.from_eta(scaled, h, c2)
    if good_set.r >= d.J / (2.0 * params.lam):
        raise DomainError(
            f"η(N)={good_set.r:.4g} must be below J/(2λ)={d.J / (2 * params.lam):.4g}; "
            "increase N"
        )
    contraction_set = good_set.interior()
    T1 = (1.0 - h) / (2.0 * d.J) * math.log(N)
    T2 = d.t_N + xi / 2.0
    T3 = d.t_N + xi
    ensemble = coupled_ensemble(
        scaled, 0, N, T3, replications, master_seed,
        good_set=good_set, exit_after=T1, checkpoints=(T1, T2),
        release_after=T2, workers=workers,
    )
    burned_in = contraction_set.contains(ensemble.w_states[:, 0]) & contraction_set.contains(
        ensemble.z_states[:, 0]
    )
    inside_T2 = burned_in & (ensemble.tau_exit > T2)
    close = (ensemble.z_states[:, 1] - ensemble.w_states[:, 1]) <= math.sqrt(N)
    entered_final = inside_T2 & close
    failed = (ensemble.tau_couple > T3) & (ensemble.tau_exit > T3)
    logger.info("N=%d xi=%g: %d/%d burned in", N, xi, burned_in.sum(), replications)
    return PhaseReport(
        N=N,
        xi=float(xi),
        phase_times=(T1, T2, T3),
        burn_in=(int(burned_in.sum()), replications),
        intermediate=(int((inside_T2 & close).sum()), int(inside_T2.sum())),
        final=(int((entered_final & ~failed).sum()), int(entered_final.sum())),
        coalesced=(int(np.sum(ensemble.tau_couple <= T3)), replications),
        level=level,
    )


def intermediate_phase_fit(
    params: ModelParams,
    N: int,
    replications: int,
    master_seed: int,
    xi_fit: float = 2.0,
    xi_validate: Sequence[float] = (4.0, 8.0),
    h: float = 0.5,
    c2: float = 1.0,
    level: float = 0.05,
    workers: int = 1,
) -> ExperimentResult:
    """
    Fit C̄ in 1 − 2C̄e^{−Jξ/2} at `xi_fit`, then validate at `xi_validate`.

    A validation point passes when the upper Wilson bound of the intermediate
    frequency reaches the fitted lower bound.
    """
    J = derived(params).J
    rows = []
    c_bar = math.nan
    for xi in (xi_fit, *xi_validate):
        report = phase_verification(params, N, xi, replications, master_seed, h, c2, level, workers)
        successes, trials = report.intermediate
        frequency = report.frequency("intermediate")
        if xi == xi_fit:
            c_bar = (1.0 - frequency) / (2.0 * math.exp(-J * xi / 2.0)) if trials else math.nan
        bound = 1.0 - 2.0 * c_bar * math.exp(-J * xi / 2.0)
        _, high = wilson_interval(successes, trials, 1.0 - level)
        rows.append(
            {
                "xi": xi,
                "role": "fit" if xi == xi_fit else "validate",
                "successes": successes,
                "trials": trials,
                "frequency": frequency,
                "ci_high": high,
                "bound": bound,
                "ok": bool(high >= bound),
            }
        )
    table = pd.DataFrame(rows)
    summary = {
        "c_bar": c_bar,
        "validated": bool(table.loc[table["role"] == "validate", "ok"].all()),
    }
    return ExperimentResult("intermediate-phase", {"fit": table}, summary)


def minimal_radius(law: ProbabilityVector, centre: float, tail: float = 0.05) -> float:
    """
    Smallest c with mass{x : |x − centre| > c√N} ≤ tail.

    The tail mass only drops at the distances of the states, so the minimum is
    one of them (or 0).
    """
    N = len(law) - 1
    distances = np.abs(np.arange(N + 1) - centre) / math.sqrt(N)
    order = np.argsort(distances, kind="stable")
    sorted_distances = distances[order]
    masses = law.values[order]
    beyond = np.append(np.cumsum(masses[::-1])[::-1][1:], 0.0)
    # beyond[j]: mass strictly farther than the j-th closest state
    first = int(np.argmax(beyond <= tail))
    return float(sorted_distances[first])


def stationary_concentration(
    params: ModelParams,
    N_list: Sequence[int],
    xi: Optional[float] = None,
    k1: float = 1.0,
    c4: float = 1.0,
    c_grid: Optional[Sequence[float]] = None,
    tail: float = 0.05,
) -> ExperimentResult:
    """
    Exact mass of π_N outside balls of radius c√N around x⋆N.

    Reports the tail on a grid of c, the minimal c with tail ≤ `tail`, and the
    offset |E π_N − x⋆N|/√N. With `xi`, also the mass outside the ball of
    radius (e^{−Jξ}K₁ + 2ξ)√N against ψ₁(ξ) + 3e^{−Jξ²/(3(λ+μ+ε))}.
    """
    N_list = _check_increasing(N_list)
    c_grid = np.linspace(0.0, 3.0, 31) if c_grid is None else np.asarray(c_grid, float)
    J = derived(params).J
    grid_rows, rows = [], []
    for N in N_list:
        scaled = params.with_population(N)
        x_star_N = derived(scaled).x_star * N
        pi = stationary_distribution(scaled)
        distances = np.abs(np.arange(N + 1) - x_star_N) / math.sqrt(N)
        for c in c_grid:
            grid_rows.append({"N": N, "c": c, "tail": pi.mass(distances > c)})
        row = {
            "N": N,
            "c_min": minimal_radius(pi, x_star_N, tail),
            "mean_offset": abs(pi.mean() - x_star_N) / math.sqrt(N),
            "sd_over_sqrt_N": math.sqrt(pi.variance() / N),
        }
        if xi is not None:
            radius = math.exp(-J * xi) * k1 + 2.0 * xi
            row["ball_radius"] = radius
            row["outside_ball"] = pi.mass(distances > radius)
            row["bound"] = psi1(params, xi, c4) + 3.0 * float(_separation_term(params, xi))
        rows.append(row)
    table = pd.DataFrame(rows)
    c_min = table["c_min"].to_numpy()
    offsets = table["mean_offset"].to_numpy()
    summary = {
        "c_min_ratio": float(c_min.max() / c_min.min()),
        "c_min_stable": bool(c_min.max() / c_min.min() <= 1.5),
        "offset_constant": float(offsets[0]),
        "offset_stable": bool(np.all(offsets <= 1.5 * offsets[0])),
    }
    if xi is not None:
        summary["ball_bound_ok"] = bool(np.all(table["outside_ball"] <= table["bound"]))
    return ExperimentResult(
        "stationary-conc", {"radii": table, "tail_grid": pd.DataFrame(grid_rows)}, summary
    )


def _reference_state(params: ModelParams, radius: Optional[float]) -> int:
    good_set = GoodSet.default(params) if radius is None else GoodSet(params, radius)
    return math.floor((derived(params).x_star + good_set.r / 2.0) * params.N)


def lower_bound_witness(
    params: ModelParams,
    N: int,
    xi: float,
    radius: Optional[float] = None,
    k1: float = 1.0,
    c4: float = 1.0,
    tolerance: float = DEFAULT_TOLERANCE,
    max_work: float = 5e10,
) -> ExperimentResult:
    """
    Exact distance to stationarity at t_N − ξ from x̄ = ⌊(x⋆ + r/2)N⌋.

    S_N is the ball of radius (e^{−Jξ}K₁ + 2ξ)√N around x⋆N. The stationary
    mass of S_N minus the transient mass of S_N bounds the distance from below.
    """
    scaled = params.with_population(N)
    d = derived(scaled)
    t = d.t_N - xi
    if t < 0:
        raise DomainError(f"t_N − xi = {t:.6g} is negative (t_N={d.t_N:.6g})")
    check_workload(scaled, 1, t, max_work, f"lower-bound witness at N={N}")
    x_bar = _reference_state(scaled, radius)
    pi = stationary_distribution(scaled)
    law = transient_distribution(scaled, ProbabilityVector.point_mass(N, x_bar), t, tolerance)
    ball_radius = (math.exp(-d.J * xi) * k1 + 2.0 * xi) * math.sqrt(N)
    in_ball = np.abs(np.arange(N + 1) - d.x_star * N) <= ball_radius
    tv = tv_distance(law, pi)
    transient_mass = law.mass(in_ball)
    stationary_mass = pi.mass(in_ball)
    bound = 3.0 * float(_separation_term(params, xi))
    table = pd.DataFrame(
        [
            {
                "N": N,
                "xi": xi,
                "t": t,
                "x_bar": x_bar,
                "tv": tv,
                "ball_radius": ball_radius,
                "transient_mass": transient_mass,
                "stationary_mass": stationary_mass,
                "separation": stationary_mass - transient_mass,
                "mass_bound": bound,
                "psi2_lower": 1.0 - psi2_composite(params, xi, c4) if xi > 0 else math.nan,
                "truncation_error": law.truncation_error,
            }
        ]
    )
    summary = {
        "tv": tv,
        "mass_within_bound": bool(transient_mass <= bound),
        "separation_consistent": bool(tv >= stationary_mass - transient_mass - 1e-12),
    }
    return ExperimentResult("lower-bound", {"witness": table}, summary)


def mean_decay_check(
    params: ModelParams,
    N: int,
    c_values: Sequence[float] = (0.0, 1.0),
    radius: Optional[float] = None,
    tolerance: float = DEFAULT_TOLERANCE,
    max_work: float = 5e10,
) -> ExperimentResult:
    """
    Ratios of the exact mean offsets one time unit apart, against e^J.

    Both ratios are reported: `ratio_star` uses offsets from x⋆N and
    `ratio_stationary` offsets from the exact stationary mean. Only the
    latter is checked, because finite-N stationary bias dominates x⋆N
    offsets once the mean has relaxed.
    """
    scaled = params.with_population(N)
    d = derived(scaled)
    check_workload(
        scaled, 1, d.t_N + max(c_values, default=0.0) + 1.0, max_work, f"mean decay at N={N}"
    )
    x_bar = _reference_state(scaled, radius)
    decay = mean_decay(scaled, x_bar, c_values, tolerance)
    target = math.exp(d.J)
    offsets = decay.mean_at_c - decay.stationary_mean
    table = pd.DataFrame(
        {
            "c": decay.c,
            "mean_at_c": decay.mean_at_c,
            "mean_at_c_plus_1": decay.mean_at_c_plus_one,
            "ratio_star": decay.ratio_star,
            "ratio_stationary": decay.ratio_stationary,
            "k1_estimate": (decay.mean_at_c - decay.x_star_N)
            / (np.exp(-d.J * decay.c) * math.sqrt(N)),
        }
    )
    positive = (offsets > 0) & (decay.mean_at_c_plus_one - decay.stationary_mean > 0)
    within = np.abs(decay.ratio_stationary / target - 1.0) <= 0.2
    summary = {
        "x_bar": x_bar,
        "e_J": target,
        "stationary_mean": decay.stationary_mean,
        "x_star_N": decay.x_star_N,
        "ratio_ok": bool(np.all(within[positive])),
    }
    return ExperimentResult("mean-decay", {"ratios": table}, summary)


def coupling_inequality(
    params: ModelParams,
    N: int,
    w0: int,
    z0: int,
    times: Optional[Sequence[float]],
    replications: int,
    master_seed: int,
    level: float = 0.05,
    tolerance: float = DEFAULT_TOLERANCE,
    workers: int = 1,
) -> ExperimentResult:
    """
    Empirical P(τ_couple > t) with its upper Wilson bound against the exact
    ‖P^t(w0,·) − P^t(z0,·)‖_TV. By default t runs over t_N + {−1, −½, 0, ½, 1}.
    """
    scaled = params.with_population(N)
    t_N = derived(scaled).t_N
    if times is None:
        times = [max(t_N + offset, 0.0) for offset in (-1.0, -0.5, 0.0, 0.5, 1.0)]
    times = np.asarray(sorted(times), dtype=float)
    exact = pairwise_tv(scaled, w0, z0, times, tolerance)
    ensemble = coupled_ensemble(
        scaled, w0, z0, times[-1], replications, master_seed,
        release_after=0.0, workers=workers,
    )
    rows = []
    for t, tv in zip(times, exact):
        failures = int(np.sum(ensemble.tau_couple > t))
        low, high = wilson_interval(failures, replications, 1.0 - level)
        rows.append(
            {
                "t": t,
                "exact_tv": tv,
                "tail": failures / replications,
                "ci_low": low,
                "ci_high": high,
                "holds": bool(high >= tv),
            }
        )
    table = pd.DataFrame(rows)
    return ExperimentResult(
        "coupling-inequality",
        {"inequality": table},
        {"holds": bool(table["holds"].all())},
    )
