"""
Run configuration: sectioned ``key = value`` files plus dotted command-line
overrides such as ``--model.lambda 1.0``.

Every key has a parser and a default; unknown keys and missing model rates are
rejected with a `ConfigError` naming the key.
"""
import configparser
import logging
import math
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from epsistools.chain import ModelParams
from epsistools.errors import ConfigError

logger = logging.getLogger(__name__)

AUTO = "auto"


def _parse_int(raw: str) -> int:
    return int(raw.strip())


def _parse_float(raw: str) -> float:
    return float(raw.strip())


def _parse_int_list(raw: str) -> list[int]:
    return [int(item) for item in raw.split(",") if item.strip()]


def _parse_float_list(raw: str) -> list[float]:
    return [float(item) for item in raw.split(",") if item.strip()]


def _auto(parser: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(raw: str):
        return None if raw.strip().lower() == AUTO else parser(raw)

    parse.__name__ = f"auto_{parser.__name__}"
    return parse


def _choice(*options: str) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        value = raw.strip().lower()
        if value not in options:
            raise ValueError(f"expected one of {'|'.join(options)}")
        return value

    return parse


def _text(raw: str) -> str:
    return raw.strip()


# section -> key -> (parser, default as text); a default of None means required
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Optional[str]]]] = {
    "run": {
        "master_seed": (_parse_int, "20240101"),
        "threads": (_parse_int, "1"),
    },
    "model": {
        "lambda": (_parse_float, None),
        "mu": (_parse_float, None),
        "epsilon": (_parse_float, None),
    },
    "experiment": {
        "N": (_parse_int, "100"),
        "N_list": (_parse_int_list, "200,400,800,1600"),
        "replications": (_parse_int, "200"),
        "xi": (_parse_float, "2.0"),
        "xi_grid": (_parse_float_list, "1,2,4,8,16"),
        "delta": (_parse_float, "0.25"),
        "delta_levels": (_parse_float_list, "0.9,0.75,0.5,0.25,0.1"),
        "start_set": (_choice("endpoints", "full"), "endpoints"),
        "horizon": (_auto(_parse_float), AUTO),
        "radius": (_auto(_parse_float), AUTO),
        "h": (_parse_float, "0.5"),
        "t": (_parse_float, "1.0"),
        "times": (_auto(_parse_float_list), AUTO),
        "x0": (_parse_int, "0"),
        "w0": (_parse_int, "0"),
        "z0": (_auto(_parse_int), AUTO),
        "c2": (_parse_float, "1.0"),
        "c4": (_parse_float, "1.0"),
        "k1": (_parse_float, "1.0"),
        "c_star": (_parse_float, "1.0"),
        "tolerance": (_parse_float, "1e-12"),
        "max_work": (_parse_float, "5e10"),
        "level": (_parse_float, "0.05"),
    },
    "output": {
        "directory": (_text, "results"),
        "format": (_choice("csv", "json", "both"), "both"),
    },
}


def _render(value) -> str:
    if value is None:
        return AUTO
    if isinstance(value, list):
        return ",".join(_render(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig:
    """
    Fully resolved run configuration.

    Attributes
    ----------
    `values` : dict[str, dict[str, Any]]
        Parsed value of every key of every section, defaults included.

    Methods
    -------
    `from_file`
        Read a configuration file and apply overrides.
    `from_mapping`
        Build from raw text values by section.
    `model_params`
        ModelParams for a population size.
    `echo`
        Resolved configuration as text values.
    `to_ini`
        Resolved configuration as a configuration file.
    """

    def __init__(self, values: Mapping[str, Mapping[str, Any]]):
        self.values = {section: dict(keys) for section, keys in values.items()}
        self.validate()

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Mapping[str, str]]) -> "RunConfig":
        for section, keys in raw.items():
            if section not in SCHEMA:
                raise ConfigError(section, "unknown section")
            for key in keys:
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{section}.{key}", "unknown key")
        values = {}
        for section, keys in SCHEMA.items():
            values[section] = {}
            for key, (parser, default) in keys.items():
                text = raw.get(section, {}).get(key, default)
                if text is None:
                    raise ConfigError(f"{section}.{key}", "missing required key")
                try:
                    values[section][key] = parser(str(text))
                except ValueError as error:
                    raise ConfigError(
                        f"{section}.{key}", f"cannot parse {text!r} ({error})"
                    ) from error
        return cls(values)

    @classmethod
    def from_file(
        cls, path: Optional[str] = None, overrides: Optional[Mapping[str, str]] = None
    ) -> "RunConfig":
        """
        Read `path` (if given) and apply dotted `overrides`.

        Parameters
        ----------
        path : str, optional
            Sectioned key = value file.
        overrides : Mapping[str, str], optional
            "section.key" -> raw value; wins over the file.

        Returns
        -------
        RunConfig
            The resolved configuration.
        """
        raw: dict[str, dict[str, str]] = {}
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            try:
                with open(path, encoding="utf-8") as handle:
                    parser.read_file(handle)
            except OSError as error:
                raise ConfigError("config", f"cannot read {path}: {error}") from error
            except configparser.Error as error:
                raise ConfigError("config", f"malformed file {path}: {error}") from error
            raw = {section: dict(parser[section]) for section in parser.sections()}
            logger.debug("read configuration from %s", path)
        for dotted, text in (overrides or {}).items():
            section, _, key = dotted.partition(".")
            if not key:
                raise ConfigError(dotted, "override must be written section.key")
            raw.setdefault(section, {})[key] = text
        return cls.from_mapping(raw)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def master_seed(self) -> int:
        return self.values["run"]["master_seed"]

    @property
    def threads(self) -> int:
        return self.values["run"]["threads"]

    @property
    def experiment(self) -> dict:
        return self.values["experiment"]

    @property
    def output_directory(self) -> Path:
        return Path(self.values["output"]["directory"])

    @property
    def output_format(self) -> str:
        return self.values["output"]["format"]

    def model_params(self, N: Optional[int] = None) -> ModelParams:
        model = self.values["model"]
        N = self.experiment["N"] if N is None else N
        return ModelParams(model["lambda"], model["mu"], model["epsilon"], N)

    def validate(self) -> None:
        """Check every key against the preconditions of the operations using it."""
        run, model, experiment = self.values["run"], self.values["model"], self.experiment
        if not 0 <= run["master_seed"] < 2**64:
            raise ConfigError("run.master_seed", "must lie in [0, 2^64)")
        if run["threads"] < 1:
            raise ConfigError("run.threads", "must be at least 1")
        for key in ("lambda", "mu", "epsilon"):
            if not math.isfinite(model[key]) or model[key] <= 0:
                raise ConfigError(f"model.{key}", "must be a finite rate above 0")
        positive_ints = {"N": experiment["N"], "replications": experiment["replications"]}
        for key, value in positive_ints.items():
            if value < 1:
                raise ConfigError(f"experiment.{key}", "must be at least 1")
        if not experiment["N_list"] or any(
            b <= a for a, b in zip(experiment["N_list"], experiment["N_list"][1:])
        ) or experiment["N_list"][0] < 1:
            raise ConfigError("experiment.N_list", "must be positive and increasing")
        if not 0 < experiment["delta"] < 1:
            raise ConfigError("experiment.delta", "must lie in (0, 1)")
        if not experiment["delta_levels"] or any(
            not 0 < level < 1 for level in experiment["delta_levels"]
        ):
            raise ConfigError("experiment.delta_levels", "levels must lie in (0, 1)")
        if not experiment["xi_grid"] or any(xi <= 0 for xi in experiment["xi_grid"]):
            raise ConfigError("experiment.xi_grid", "values must be positive")
        if not 0 < experiment["h"] < 1:
            raise ConfigError("experiment.h", "must lie in (0, 1)")
        if experiment["t"] < 0:
            raise ConfigError("experiment.t", "must be non-negative")
        if experiment["horizon"] is not None and experiment["horizon"] <= 0:
            raise ConfigError("experiment.horizon", "must be positive")
        if experiment["radius"] is not None and experiment["radius"] <= 0:
            raise ConfigError("experiment.radius", "must be positive")
        if experiment["times"] is not None and (
            not experiment["times"]
            or any(t < 0 for t in experiment["times"])
            or any(b < a for a, b in zip(experiment["times"], experiment["times"][1:]))
        ):
            raise ConfigError("experiment.times", "must be non-negative and increasing")
        for key in ("x0", "w0"):
            if not 0 <= experiment[key] <= experiment["N"]:
                raise ConfigError(f"experiment.{key}", f"outside {{0..{experiment['N']}}}")
        z0 = experiment["z0"]
        if z0 is not None and not experiment["w0"] <= z0 <= experiment["N"]:
            raise ConfigError("experiment.z0", "must satisfy w0 ≤ z0 ≤ N")
        for key in ("c2", "c4", "k1", "c_star"):
            if experiment[key] < 0:
                raise ConfigError(f"experiment.{key}", "must be non-negative")
        if not 0 < experiment["tolerance"] < 1e-3:
            raise ConfigError("experiment.tolerance", "must lie in (0, 1e-3)")
        if experiment["max_work"] <= 0:
            raise ConfigError("experiment.max_work", "must be positive")
        if not 0 < experiment["level"] < 1:
            raise ConfigError("experiment.level", "must lie in (0, 1)")

    def echo(self) -> dict[str, dict[str, str]]:
        """Every resolved key as text, so that `to_ini` reproduces the run."""
        return {
            section: {key: _render(value) for key, value in keys.items()}
            for section, keys in self.values.items()
        }

    def to_ini(self) -> str:
        lines = []
        for section, keys in self.echo().items():
            lines.append(f"[{section}]")
            lines.extend(f"{key} = {value}" for key, value in keys.items())
            lines.append("")
        return "\n".join(lines)
