"""
Command-line front end.

``epsistools <subcommand> [--config FILE] [--section.key VALUE ...]`` resolves
the configuration, runs one operation and writes
``<directory>/<subcommand>_<table>.csv`` and ``<directory>/<subcommand>_summary.json``.

Exit codes: 0 ok, 2 configuration or domain error, 3 infeasible workload,
4 numerical failure.
"""
import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from epsistools import exact
from epsistools.chain import (
    c3_constant,
    derived,
    generator_matrix,
    min_total_rate,
    uniformization_rate,
)
from epsistools.config import RunConfig
from epsistools.deterministic import decay_bound, envelope_delta, mean_envelope, ode_solution
from epsistools.errors import (
    ConfigError,
    DomainError,
    EpsisError,
    InfeasibleWorkloadError,
)
from epsistools.experiments import (
    ExperimentResult,
    concentration_scan,
    coupling_inequality,
    coupling_tail,
    cutoff_scan,
    lower_bound_witness,
    mean_decay_check,
    phase_verification,
    psi1,
    stationary_concentration,
)
from epsistools.simulate import (
    GoodSet,
    exit_time,
    occupation_frequencies,
    simulate_coupled,
    simulate_path,
    simulate_reflected,
    sup_deviation,
    trajectories_frame,
)
from epsistools.streams import SINGLE_STREAM, replication_seed

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def _derived(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    d = derived(params)
    row = {
        **params.as_dict(),
        "J": d.J,
        "x_star": d.x_star,
        "x1_star": d.x1_star,
        "t_N": d.t_N,
        "k": d.k,
        "c3": c3_constant(params),
        "q": uniformization_rate(params),
        "min_total_rate": min_total_rate(params),
    }
    return ExperimentResult("derived", {"quantities": pd.DataFrame([row])}, dict(row))


def _time_grid(config: RunConfig, end: float, points: int = 41) -> np.ndarray:
    times = config.experiment["times"]
    return np.linspace(0.0, end, points) if times is None else np.asarray(times, float)


def _ode(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    experiment = config.experiment
    d = derived(params)
    times = _time_grid(config, experiment["horizon"] or 4.0 * d.t_N)
    alpha = experiment["x0"] / params.N
    y0 = alpha - d.x_star
    delta = envelope_delta(params, params.N, experiment["c_star"], experiment["h"])
    lower, upper = mean_envelope(params, y0, delta, times)
    table = pd.DataFrame(
        {
            "t": times,
            "x": ode_solution(params, alpha, times),
            "decay_bound": decay_bound(params, y0, times),
            "envelope_lower": lower,
            "envelope_upper": upper,
        }
    )
    table["y"] = table["x"] - d.x_star
    return ExperimentResult(
        "ode", {"solution": table}, {"alpha": alpha, "envelope_delta": delta}
    )


def _check_workload(
    config: RunConfig, params, n_starts: int, horizon: float, what: str
) -> None:
    exact.check_workload(params, n_starts, horizon, config.experiment["max_work"], what)


def _stationary(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    # the balance residual uses the dense generator
    _check_workload(config, params, params.N + 1, 0.0, "stationary residual")
    pi = exact.stationary_distribution(params)
    residual = np.abs(generator_matrix(params).T @ pi.values).max()
    table = pd.DataFrame({"x": np.arange(params.N + 1), "probability": pi.values})
    summary = {
        "mean": pi.mean(),
        "variance": pi.variance(),
        "x_star_N": derived(params).x_star * params.N,
        "balance_residual": float(residual),
    }
    return ExperimentResult("stationary", {"distribution": table}, summary)


def _transient(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    experiment = config.experiment
    _check_workload(config, params, 1, experiment["t"], "transient law")
    law = exact.transient_distribution(
        params,
        exact.ProbabilityVector.point_mass(params.N, experiment["x0"]),
        experiment["t"],
        experiment["tolerance"],
    )
    table = pd.DataFrame({"x": np.arange(params.N + 1), "probability": law.values})
    summary = {
        "mean": law.mean(),
        "variance": law.variance(),
        "truncation_error": law.truncation_error,
        "tv_to_stationary": exact.tv_distance(law, exact.stationary_distribution(params)),
    }
    return ExperimentResult("transient", {"distribution": table}, summary)


def _full_scan(config: RunConfig) -> bool:
    return config.experiment["start_set"] == "full"


def _start_count(config: RunConfig, params) -> int:
    return params.N + 1 if _full_scan(config) else 2


def _tvprofile(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    d = derived(params)
    times = _time_grid(config, config.experiment["horizon"] or 2.0 * d.t_N + 10.0 / d.J)
    _check_workload(
        config, params, _start_count(config, params), times[-1], "tv profile"
    )
    profile = exact.mixing_profile(
        params,
        times,
        full_scan=_full_scan(config),
        tolerance=config.experiment["tolerance"],
        workers=config.threads,
    )
    table = pd.DataFrame(
        {"t": profile.times, "rho": profile.rho, "worst_start": profile.worst_start}
    )
    summary = {"start_set_size": len(profile.start_set), "t_N": d.t_N}
    return ExperimentResult("tvprofile", {"profile": table}, summary)


def _mixtime(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    d = derived(params)
    _check_workload(
        config, params, _start_count(config, params), 4.0 * d.t_N + 50.0 / d.J, "mixing times"
    )
    levels = config.experiment["delta_levels"]
    t_mix = exact.mixing_times(
        params, levels, full_scan=_full_scan(config), tolerance=config.experiment["tolerance"]
    )
    table = pd.DataFrame({"delta": list(t_mix), "t_mix": list(t_mix.values())})
    return ExperimentResult("mixtime", {"mixing_times": table}, {"t_N": d.t_N})


def _gap(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    gap, relaxation = exact.spectral_gap(params)
    summary = {"gap": gap, "relaxation_time": relaxation, "t_N": derived(params).t_N}
    return ExperimentResult("gap", {"gap": pd.DataFrame([summary])}, summary)


def _horizon(config: RunConfig) -> float:
    horizon = config.experiment["horizon"]
    return config.experiment["t"] if horizon is None else horizon


def _simulate(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    experiment = config.experiment
    horizon = _horizon(config)
    paths = [
        simulate_path(
            params,
            experiment["x0"],
            horizon,
            replication_seed(config.master_seed, i, SINGLE_STREAM),
        )
        for i in range(experiment["replications"])
    ]
    finals = pd.DataFrame(
        {
            "replication": np.arange(len(paths)),
            "n_events": [path.n_events for path in paths],
            "final_state": [int(path.states[-1]) for path in paths],
            "sup_deviation": [sup_deviation(path, params) for path in paths],
        }
    )
    summary = {
        "horizon": horizon,
        "mean_final_state": float(finals["final_state"].mean()),
        "exact_mean": exact.transient_moments(params, experiment["x0"], horizon)[0],
    }
    return ExperimentResult(
        "simulate", {"trajectories": trajectories_frame(paths), "paths": finals}, summary
    )


def _good_set(config: RunConfig, params) -> GoodSet:
    radius = config.experiment["radius"]
    h = config.experiment["h"]
    return GoodSet.default(params, h) if radius is None else GoodSet(params, radius, h)


def _couple(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    experiment = config.experiment
    z0 = params.N if experiment["z0"] is None else experiment["z0"]
    horizon = experiment["horizon"] or derived(params).t_N + experiment["xi"]
    good_set = _good_set(config, params)
    rows = []
    for i in range(experiment["replications"]):
        trace = simulate_coupled(
            params,
            experiment["w0"],
            z0,
            horizon,
            good_set,
            replication_seed(config.master_seed, i, SINGLE_STREAM),
        )
        rows.append(
            {
                "replication": i,
                "tau_couple": trace.tau_couple,
                "tau_exit": trace.tau_exit,
                "monotone": trace.is_monotone(),
            }
        )
    table = pd.DataFrame(rows)
    summary = {
        "horizon": horizon,
        "coalesced_share": float(np.isfinite(table["tau_couple"]).mean()),
        "all_monotone": bool(table["monotone"].all()),
    }
    return ExperimentResult("couple", {"traces": table}, summary)


def _reflect(config: RunConfig) -> ExperimentResult:
    params = config.model_params()
    experiment = config.experiment
    good_set = _good_set(config, params)
    horizon = _horizon(config)
    seed = replication_seed(config.master_seed, 0, SINGLE_STREAM)
    x0 = experiment["x0"]
    if not good_set.contains(x0):
        x0 = max(math.ceil(good_set.interval[0] * params.N), 0)
        logger.info("x0=%d lies outside the good set, starting at %d", experiment["x0"], x0)
    reflected = simulate_reflected(params, x0, good_set.r, horizon, seed)
    free = simulate_path(params, x0, horizon, seed)
    lower, upper = good_set.lower_state, good_set.upper_state
    occupation = occupation_frequencies(reflected, lower, upper)
    restricted = exact.restricted_stationary(params, lower, upper)
    tau_exit = exit_time(free, good_set)
    agree_until = np.searchsorted(free.times, tau_exit, side="left")
    agreement = bool(
        np.array_equal(free.times[:agree_until], reflected.times[:agree_until])
        and np.array_equal(free.states[:agree_until], reflected.states[:agree_until])
    )
    table = pd.DataFrame(
        {
            "x": np.arange(lower, upper + 1),
            "occupation": occupation.values,
            "stationary": restricted.values,
        }
    )
    summary = {
        "x0": x0,
        "lower_state": lower,
        "upper_state": upper,
        "tv": exact.tv_distance(occupation, restricted),
        "free_exit_time": tau_exit,
        "agree_until_exit": agreement,
    }
    return ExperimentResult("reflect", {"occupation": table}, summary)


def _cutoff_scan(config: RunConfig) -> ExperimentResult:
    experiment = config.experiment
    report = cutoff_scan(
        config.model_params(),
        experiment["N_list"],
        experiment["delta_levels"],
        full_scan=_full_scan(config),
        max_work=experiment["max_work"],
        tolerance=experiment["tolerance"],
        workers=config.threads,
    )
    return report.to_result()


def _concentration_scan(config: RunConfig) -> ExperimentResult:
    experiment = config.experiment
    return concentration_scan(
        config.model_params(),
        experiment["N_list"],
        experiment["replications"],
        config.master_seed,
        horizon=experiment["horizon"],
        workers=config.threads,
    )


def _coupling_tail(config: RunConfig) -> ExperimentResult:
    experiment = config.experiment
    N = experiment["N"]
    return coupling_tail(
        config.model_params(),
        N,
        experiment["w0"],
        N if experiment["z0"] is None else experiment["z0"],
        experiment["xi_grid"],
        experiment["replications"],
        config.master_seed,
        c4=experiment["c4"],
        level=experiment["level"],
        workers=config.threads,
    )


def _phase_verify(config: RunConfig) -> ExperimentResult:
    experiment = config.experiment
    params = config.model_params()
    report = phase_verification(
        params,
        experiment["N"],
        experiment["xi"],
        experiment["replications"],
        config.master_seed,
        h=experiment["h"],
        c2=experiment["c2"],
        level=experiment["level"],
        workers=config.threads,
    )
    summary = {
        phase: report.frequency(phase)
        for phase in ("burn_in", "intermediate", "final", "coalesced")
    }
    summary["psi1"] = psi1(params, experiment["xi"], experiment["c4"])
    return ExperimentResult("phase-verify", {"phases": report.to_frame()}, summary)


def _stationary_conc(config: RunConfig) -> ExperimentResult:
    experiment = config.experiment
    return stationary_concentration(
        config.model_params(),
        experiment["N_list"],
        xi=experiment["xi"],
        k1=experiment["k1"],
        c4=experiment["c4"],
    )


def _lower_bound(config: RunConfig) -> ExperimentResult:
    experiment = config.experiment
    return lower_bound_witness(
        config.model_params(),
        experiment["N"],
        experiment["xi"],
        radius=experiment["radius"],
        k1=experiment["k1"],
        c4=experiment["c4"],
        tolerance=experiment["tolerance"],
        max_work=experiment["max_work"],
    )


def _mean_decay(config: RunConfig) -> ExperimentResult:
    experiment = config.experiment
    return mean_decay_check(
        config.model_params(),
        experiment["N"],
        radius=experiment["radius"],
        tolerance=experiment["tolerance"],
        max_work=experiment["max_work"],
    )


def _coupling_inequality(config: RunConfig) -> ExperimentResult:
    experiment = config.experiment
    N = experiment["N"]
    return coupling_inequality(
        config.model_params(),
        N,
        experiment["w0"],
        N if experiment["z0"] is None else experiment["z0"],
        experiment["times"],
        experiment["replications"],
        config.master_seed,
        level=experiment["level"],
        tolerance=experiment["tolerance"],
        workers=config.threads,
    )


SUBCOMMANDS: dict[str, Callable[[RunConfig], ExperimentResult]] = {
    "derived": _derived,
    "ode": _ode,
    "stationary": _stationary,
    "transient": _transient,
    "tvprofile": _tvprofile,
    "mixtime": _mixtime,
    "gap": _gap,
    "simulate": _simulate,
    "couple": _couple,
    "reflect": _reflect,
    "cutoff-scan": _cutoff_scan,
    "concentration-scan": _concentration_scan,
    "coupling-tail": _coupling_tail,
    "phase-verify": _phase_verify,
    "stationary-conc": _stationary_conc,
    "lower-bound": _lower_bound,
    "mean-decay": _mean_decay,
    "coupling-inequality": _coupling_inequality,
}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_outputs(config: RunConfig, subcommand: str, result: ExperimentResult) -> list[Path]:
    """Write the result tables and the summary; returns the written paths."""
    directory = config.output_directory
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if config.output_format in ("csv", "both"):
        for table_name, table in result.tables.items():
            path = directory / f"{subcommand}_{table_name}.csv"
            table.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
            written.append(path)
    if config.output_format in ("json", "both"):
        payload = {
            "subcommand": subcommand,
            "master_seed": config.master_seed,
            "config": config.echo(),
            "summary": _jsonable(result.summary),
        }
        path = directory / f"{subcommand}_summary.json"
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    logger.info("wrote %s", ", ".join(str(path) for path in written))
    return written


def split_overrides(argv: Sequence[str]) -> tuple[list[str], dict[str, str]]:
    """
    Separate dotted ``--section.key VALUE`` (or ``--section.key=VALUE``) flags
    from the remaining arguments.
    """
    remaining, overrides = [], {}
    items = list(argv)
    while items:
        token = items.pop(0)
        name = token[2:].partition("=")[0] if token.startswith("--") else ""
        if "." not in name:
            remaining.append(token)
            continue
        if "=" in token:
            value = token.partition("=")[2]
        elif items:
            value = items.pop(0)
        else:
            raise ConfigError(name, "missing value")
        overrides[name] = value
    return remaining, overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epsistools",
        description="Exact analysis and simulation of the logistic SIS chain "
        "with self-infection. Config keys are overridden with --section.key VALUE.",
    )
    parser.add_argument("subcommand", choices=sorted(SUBCOMMANDS))
    parser.add_argument("--config", help="sectioned key = value configuration file")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and write its outputs.

    Returns
    -------
    int
        Process exit status.
    """
    argv = sys.argv[1:] if argv is None else argv
    try:
        remaining, overrides = split_overrides(argv)
    except ConfigError as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args = build_parser().parse_args(remaining)
    except SystemExit as error:
        return int(error.code or 0)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        config = RunConfig.from_file(args.config, overrides)
        result = SUBCOMMANDS[args.subcommand](config)
        write_outputs(config, args.subcommand, result)
    except (ConfigError, DomainError) as error:
        logger.error("%s", error)
        print(f"error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleWorkloadError as error:
        logger.error("%s", error)
        print(f"infeasible: {error}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except EpsisError as error:
        logger.error("%s", error)
        print(f"numerical failure: {error}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(_jsonable(result.summary), sort_keys=True))
    return EXIT_OK
