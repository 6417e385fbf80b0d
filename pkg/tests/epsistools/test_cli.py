import json
import math

import pytest
from pytest import approx  # Used for float comparisons

from epsistools import cli
from epsistools.chain import ModelParams
from epsistools.cli import run, split_overrides
from epsistools.config import RunConfig
from epsistools.errors import ConfigError, NumericalFailure
from epsistools.simulate import GoodSet

RATES = ["--model.lambda", "1", "--model.mu", "2", "--model.epsilon", "0.5"]


def _argv(subcommand, directory, *extra):
    return [subcommand, *RATES, "--output.directory", str(directory), *extra]


def test_derived_quantities(tmp_path, capsys):
    assert run(_argv("derived", tmp_path, "--experiment.N", "1000")) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["J"] == approx(2.0615528, abs=1e-7)
    assert summary["t_N"] == approx(1.675377, abs=1e-6)
    assert (tmp_path / "derived_quantities.csv").exists()
    payload = json.loads((tmp_path / "derived_summary.json").read_text())
    assert payload["master_seed"] == 20240101
    assert payload["config"]["experiment"]["N"] == "1000"


def test_missing_rate_exits_with_config_error(tmp_path, capsys):
    argv = ["derived", "--model.lambda", "1", "--model.epsilon", "0.5"]
    assert run(argv + ["--output.directory", str(tmp_path)]) == 2
    assert "mu" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert run(["spectrum", *RATES]) == 2


def test_unknown_key(tmp_path, capsys):
    assert run(_argv("derived", tmp_path, "--model.gamma", "1")) == 2
    assert "model.gamma" in capsys.readouterr().err


def test_simulation_output_is_reproducible(tmp_path, capsys):
    extra = ["--experiment.N", "50", "--experiment.replications", "3", "--experiment.t", "0.5"]
    assert run(_argv("simulate", tmp_path / "a", *extra)) == 0
    assert run(_argv("simulate", tmp_path / "b", *extra)) == 0
    for name in ("simulate_trajectories.csv", "simulate_paths.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_infeasible_cutoff_scan(tmp_path, capsys):
    assert run(_argv("cutoff-scan", tmp_path, "--experiment.max_work", "1")) == 3
    assert "infeasible" in capsys.readouterr().err
    assert not (tmp_path / "cutoff-scan_summary.json").exists()


@pytest.mark.parametrize(
    "subcommand, extra",
    [
        ("tvprofile", ["--experiment.start_set", "full"]),
        ("tvprofile", []),
        ("mixtime", ["--experiment.start_set", "full"]),
        ("transient", ["--experiment.t", "5"]),
        ("stationary", []),
        ("lower-bound", ["--experiment.xi", "0.5"]),
        ("mean-decay", []),
    ],
)
def test_infeasible_exact_workload(tmp_path, capsys, subcommand, extra):
    argv = _argv(subcommand, tmp_path, "--experiment.max_work", "1", *extra)
    assert run(argv) == 3
    assert "infeasible" in capsys.readouterr().err
    assert not (tmp_path / f"{subcommand}_summary.json").exists()


def test_tv_profile_within_budget(tmp_path, capsys):
    argv = _argv("tvprofile", tmp_path, "--experiment.N", "40", "--experiment.max_work", "1e9")
    assert run(argv + ["--experiment.start_set", "full"]) == 0
    assert json.loads(capsys.readouterr().out)["start_set_size"] == 41


def test_reflect_starts_inside_good_set_by_default(tmp_path, capsys):
    assert run(_argv("reflect", tmp_path, "--experiment.N", "50")) == 0
    summary = json.loads(capsys.readouterr().out)
    good_set = GoodSet.default(ModelParams(1.0, 2.0, 0.5, 50))
    assert summary["x0"] == math.ceil(good_set.interval[0] * 50)
    assert good_set.contains(summary["x0"])
    assert summary["agree_until_exit"]


def test_reflect_keeps_start_inside_good_set(tmp_path, capsys):
    argv = _argv("reflect", tmp_path, "--experiment.N", "50", "--experiment.x0", "14")
    assert run(argv) == 0
    assert json.loads(capsys.readouterr().out)["x0"] == 14


def test_lower_bound_past_cutoff(tmp_path, capsys):
    assert run(_argv("lower-bound", tmp_path, "--experiment.xi", "50")) == 2
    assert "negative" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys, monkeypatch):
    def fail(config):
        raise NumericalFailure("step budget exceeded")

    monkeypatch.setitem(cli.SUBCOMMANDS, "gap", fail)
    assert run(_argv("gap", tmp_path)) == 4


def test_config_echo_round_trip(tmp_path, capsys):
    config_file = tmp_path / "run.ini"
    config_file.write_text("[model]\nlambda = 1\nmu = 2\nepsilon = 0.5\n")
    argv = ["stationary", "--config", str(config_file), "--output.directory", str(tmp_path)]
    assert run(argv + ["--output.format=json"]) == 0
    payload = json.loads((tmp_path / "stationary_summary.json").read_text())
    echoed = RunConfig.from_mapping(payload["config"])
    assert echoed.values == RunConfig.from_file(
        str(config_file), {"output.directory": str(tmp_path), "output.format": "json"}
    ).values
    assert not (tmp_path / "stationary_distribution.csv").exists()


def test_split_overrides():
    remaining, overrides = split_overrides(
        ["gap", "--a.b=1", "--config", "x.ini", "--c.d", "2"]
    )
    assert remaining == ["gap", "--config", "x.ini"]
    assert overrides == {"a.b": "1", "c.d": "2"}
    with pytest.raises(ConfigError):
        split_overrides(["gap", "--a.b"])
