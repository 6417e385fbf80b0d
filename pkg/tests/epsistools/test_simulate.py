import math

import numpy as np
import pandas as pd
import pytest
from pytest import approx  # Used for float comparisons
from scipy.stats import chi2

from epsistools.chain import birth_rate, death_rate, derived
from epsistools.deterministic import ode_solution
from epsistools.errors import DomainError
from epsistools.exact import (
    ProbabilityVector,
    restricted_stationary,
    transient_distribution,
    tv_distance,
)
from epsistools.simulate import (
    GoodSet,
    Trajectory,
    coupled_ensemble,
    exit_time,
    martingale_functional,
    occupation_frequencies,
    sample_states,
    simulate_coupled,
    simulate_path,
    simulate_reflected,
    sup_deviation,
    write_trajectories_csv,
)
from epsistools.streams import make_rng, replication_seed


def _check_path(traj, lower, upper):
    assert traj.times[0] == 0.0
    assert np.all(np.diff(traj.times) > 0)
    assert np.all(np.abs(np.diff(traj.states)) == 1)
    assert traj.states.min() >= lower and traj.states.max() <= upper
    assert traj.times[-1] <= traj.t_end


def test_zero_horizon_has_no_events(small_params):
    traj = simulate_path(small_params.model(), 7, 0.0, seed=1)
    assert traj.n_events == 0
    assert traj.states.tolist() == [7]
    assert traj.state_at(0.0) == 7


def test_same_seed_same_path(small_params):
    params = small_params.model()
    first = simulate_path(params, 0, 3.0, replication_seed(11, 4))
    second = simulate_path(params, 0, 3.0, replication_seed(11, 4))
    other = simulate_path(params, 0, 3.0, replication_seed(11, 5))
    np.testing.assert_array_equal(first.times, second.times)
    np.testing.assert_array_equal(first.states, second.states)
    assert not np.array_equal(first.states, other.states) or not np.array_equal(
        first.times, other.times
    )


def test_path_shape(small_params):
    params = small_params.model()
    traj = simulate_path(params, 50, 5.0, seed=3)
    _check_path(traj, 0, 50)
    assert traj.n_events > 0
    assert traj.state_at(traj.times[1]) == traj.states[1]
    assert traj.state_at(5.0) == traj.states[-1]


def test_path_rejects_invalid_inputs(small_params):
    params = small_params.model()
    with pytest.raises(DomainError) as excinfo:
        simulate_path(params, 51, 1.0, seed=0)
    excinfo.match("outside")
    with pytest.raises(DomainError):
        simulate_path(params, 0, -1.0, seed=0)


@pytest.mark.slow
def test_jump_chain_matches_generator(small_params):
    params = small_params.model(20)
    traj = simulate_path(params, 6, 2000.0, seed=make_rng(replication_seed(5, 0)))
    sources = traj.states[:-1]
    ups = np.diff(traj.states) > 0
    holding = np.diff(traj.times)
    statistic, dof = 0.0, 0
    for x in np.unique(sources):
        mask = sources == x
        n = mask.sum()
        if n < 2000:
            continue
        birth, death = birth_rate(params, int(x)), death_rate(params, int(x))
        expected_up = n * birth / (birth + death)
        observed_up = ups[mask].sum()
        if 0 < expected_up < n:
            statistic += (observed_up - expected_up) ** 2 * n / (expected_up * (n - expected_up))
            dof += 1
        assert holding[mask].mean() == approx(1 / (birth + death), rel=0.1)
    assert dof >= 5
    assert chi2.sf(statistic, dof) > 0.001


@pytest.mark.slow
@pytest.mark.parametrize("offset, cutoffs", [(0.5, 0.0), (0.0, 1.0), (0.0, 2.0), (2.0, 0.0)])
def test_ensemble_law_matches_uniformization(small_params, offset, cutoffs):
    params = small_params.model(100)
    t = offset + cutoffs * derived(params).t_N
    states = sample_states(params, 0, [t], 100_000, master_seed=2024)
    empirical = np.bincount(states[:, 0], minlength=101) / states.shape[0]
    exact = transient_distribution(params, ProbabilityVector.point_mass(100, 0), t)
    assert tv_distance(empirical, exact) <= 0.01


@pytest.mark.slow
@pytest.mark.parametrize("x0", [0, 20])
def test_single_path_law_matches_uniformization(small_params, x0):
    params = small_params.model(20)
    n_paths = 20_000
    finals = np.array(
        [
            simulate_path(params, x0, 1.0, replication_seed(31, i)).state_at(1.0)
            for i in range(n_paths)
        ]
    )
    empirical = np.bincount(finals, minlength=21) / n_paths
    exact = transient_distribution(params, ProbabilityVector.point_mass(20, x0), 1.0)
    assert tv_distance(empirical, exact) <= 0.03


def test_ensemble_does_not_depend_on_workers(small_params):
    params = small_params.model()
    serial = sample_states(params, 0, [0.5, 1.0], 1500, master_seed=9)
    parallel = sample_states(params, 0, [0.5, 1.0], 1500, master_seed=9, workers=2)
    assert serial.shape == (1500, 2)
    np.testing.assert_array_equal(serial, parallel)


def test_coupled_from_equal_states(small_params):
    trace = simulate_coupled(small_params.model(), 20, 20, 2.0, None, seed=1)
    assert trace.tau_couple == 0.0
    np.testing.assert_array_equal(trace.w_trajectory.states, trace.z_trajectory.states)


def test_coupled_rejects_unordered_start(small_params):
    with pytest.raises(DomainError) as excinfo:
        simulate_coupled(small_params.model(), 30, 10, 1.0, None, seed=1)
    excinfo.match("w0")


def _check_trace(trace):
    assert trace.is_monotone()
    w, z = trace.w_trajectory, trace.z_trajectory
    shared = np.intersect1d(w.times[1:], z.times[1:])
    assert np.all(shared >= trace.tau_couple)
    if math.isfinite(trace.tau_couple):
        after = trace.event_times()
        after = after[after >= trace.tau_couple]
        np.testing.assert_array_equal(w.state_at(after), z.state_at(after))


def test_coupled_traces_are_monotone(small_params):
    params = small_params.model()
    for i in range(50):
        _check_trace(simulate_coupled(params, 0, 50, 4.0, None, seed=replication_seed(3, i)))


@pytest.mark.slow
def test_many_coupled_traces_are_monotone(small_params):
    params = small_params.model(30)
    coalesced = 0
    for i in range(10_000):
        trace = simulate_coupled(params, 0, 30, 3.0, None, seed=replication_seed(8, i))
        _check_trace(trace)
        coalesced += math.isfinite(trace.tau_couple)
    assert coalesced > 5000


def test_reflected_start_must_be_inside(small_params):
    params = small_params.model(100)
    with pytest.raises(DomainError) as excinfo:
        simulate_reflected(params, 0, GoodSet.default(params).r, 1.0, seed=1)
    excinfo.match("good set")


def test_reflected_agrees_with_free_until_exit(small_params):
    params = small_params.model(100)
    good_set = GoodSet(params, 0.08)
    start = round(derived(params).x_star * 100)
    exits = 0
    for i in range(40):
        seed = replication_seed(6, i)
        reflected = simulate_reflected(params, start, good_set.r, 10.0, seed)
        free = simulate_path(params, start, 10.0, seed)
        _check_path(reflected, good_set.lower_state, good_set.upper_state)
        tau = exit_time(free, good_set)
        exits += math.isfinite(tau)
        before = free.times <= tau
        n = before.sum()
        np.testing.assert_array_equal(free.times[:n], reflected.times[:n])
        np.testing.assert_array_equal(free.states[:n], reflected.states[:n])
    assert exits > 0


@pytest.mark.slow
def test_reflected_occupation_matches_restricted_law(small_params):
    params = small_params.model()
    good_set = GoodSet.default(params)
    start = round(derived(params).x_star * params.N)
    traj = simulate_reflected(params, start, good_set.r, 30_000.0, seed=17)
    lower, upper = good_set.lower_state, good_set.upper_state
    occupation = occupation_frequencies(traj, lower, upper)
    assert tv_distance(occupation, restricted_stationary(params, lower, upper)) <= 0.02


def test_good_set_defaults(reference_params):
    params = reference_params.model()
    good_set = GoodSet.default(params)
    assert good_set.r == approx(derived(params).x_star / 2)
    assert good_set.r == approx(0.1404, abs=1e-4)
    assert good_set.h == 0.5
    assert good_set.lower_state == 140
    assert good_set.upper_state == 422
    assert good_set.contains(281)
    assert not good_set.contains(139)
    np.testing.assert_array_equal(good_set.contains([100, 300, 500]), [False, True, False])
    assert good_set.interior().r == approx(good_set.r / 2)


def test_good_set_from_eta(reference_params):
    params = reference_params.model()
    good_set = GoodSet.from_eta(params, h=0.5, c2=1.0)
    assert good_set.r == approx(2 * (1.0 + 0.7192236) * 1000**-0.25, rel=1e-6)


def test_follow_time_overflows_to_infinity(reference_params):
    good_set = GoodSet.default(reference_params.model(10**6))
    assert good_set.t_follow(1.0) == math.inf
    small = GoodSet.default(reference_params.model(4))
    assert small.t_follow(1.0) == approx(math.ceil(math.e**2) / derived(small.params).J)


@pytest.mark.parametrize(
    "r, h", [(0.0, 0.5), (-0.1, 0.5), (math.nan, 0.5), (math.inf, 0.5), (0.1, 1.0), (0.1, 0.0)]
)
def test_good_set_validation(reference_params, r, h):
    with pytest.raises(DomainError):
        GoodSet(reference_params.model(), r, h)


@pytest.mark.parametrize("r", [0.3, 0.75, 2.0])
def test_wide_good_set_is_clipped_to_state_space(reference_params, r):
    params = reference_params.model()
    good_set = GoodSet(params, r)
    assert good_set.interval[0] < 0
    assert good_set.lower_state == 0
    assert good_set.contains(0)
    if r > 1 - derived(params).x_star:
        assert good_set.upper_state == params.N
        assert good_set.contains(params.N)


def test_exit_time_edge_cases(small_params):
    params = small_params.model()
    good_set = GoodSet.default(params)
    outside = simulate_path(params, 0, 1.0, seed=2)
    assert exit_time(outside, good_set) == 0.0
    inside = Trajectory(np.array([0.0]), np.array([14]), 5.0, 50)
    assert exit_time(inside, good_set) == math.inf


def test_exit_time_after_watch_start(small_params):
    traj = Trajectory(np.array([0.0, 1.0, 2.0]), np.array([10, 11, 12]), 3.0, 20)
    assert exit_time(traj, (0.52, 0.6)) == 0.0
    assert exit_time(traj, (0.52, 0.6), after=1.5) == math.inf
    assert exit_time(traj, (0.5, 0.57)) == 2.0
    assert exit_time(traj, (0.5, 0.57), after=2.5) == 2.5


@pytest.mark.slow
def test_exit_from_interior_is_rare(small_params):
    params = small_params.model(1600)
    J = derived(params).J
    good_set = GoodSet(params, 0.1)
    start = math.ceil((derived(params).x_star - 0.05) * params.N)
    exits = sum(
        math.isfinite(
            exit_time(simulate_path(params, start, 10 / J, replication_seed(21, i)), good_set)
        )
        for i in range(400)
    )
    assert exits / 400 <= 0.01


def test_sup_deviation_is_zero_at_time_zero(small_params):
    traj = simulate_path(small_params.model(), 10, 0.0, seed=1)
    assert sup_deviation(traj, small_params.model()) == 0.0


def test_sup_deviation_near_fixed_point(reference_params):
    params = reference_params.model()
    x0 = round(derived(params).x_star * params.N)
    traj = Trajectory(np.array([0.0]), np.array([x0]), 0.05, params.N)
    deviation = sup_deviation(traj, params)
    assert 0 <= deviation <= 1 / params.N
    assert deviation == approx(
        abs(x0 / params.N - ode_solution(params, x0 / params.N, 0.05)), abs=1e-15
    )


def test_sup_deviation_checks_both_piece_ends(small_params):
    params = small_params.model()
    traj = Trajectory(np.array([0.0, 0.5]), np.array([0, 1]), 1.0, 50)
    ends = ode_solution(params, 0.0, np.array([0.0, 0.5, 1.0]))
    expected = max(ends[1], abs(1 / 50 - ends[1]), abs(1 / 50 - ends[2]))
    assert sup_deviation(traj, params) == approx(expected)


def test_martingale_without_events(reference_params):
    params = reference_params.model()
    d = derived(params)
    x0 = 400
    y0 = x0 / params.N - d.x_star
    traj = Trajectory(np.array([0.0]), np.array([x0]), 0.8, params.N)
    path = martingale_functional(traj, params)
    assert path.martingale[0] == 0.0
    assert path.at(0.0) == 0.0
    assert path.martingale[-1] == approx(0.8 * (params.lam * y0**2 + d.J * y0))
    assert path.at(0.3) == approx(0.3 * (params.lam * y0**2 + d.J * y0))


def test_martingale_representation_holds_pathwise(small_params):
    params = small_params.model(200)
    traj = simulate_path(params, 0, 4.0, seed=replication_seed(1, 1))
    path = martingale_functional(traj, params)
    assert path.times.size == traj.n_events + 2
    assert path.representation_residual() <= 1e-10
    assert path.threshold == approx(
        math.e
        * math.sqrt(4 * math.log(2) ** 2 * derived(params).k ** 2 * 200**0.5 / 200)
    )


@pytest.mark.slow
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_martingale_has_zero_mean(small_params, t):
    params = small_params.model()
    values = np.array(
        [
            martingale_functional(
                simulate_path(params, 0, 2.0, replication_seed(31, i)), params
            ).at(t)
            for i in range(10_000)
        ]
    )
    standard_error = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean()) <= 3 * standard_error


def test_occupation_frequencies(small_params):
    traj = Trajectory(np.array([0.0, 1.0, 3.0]), np.array([5, 6, 5]), 4.0, 50)
    law = occupation_frequencies(traj, 4, 6)
    np.testing.assert_allclose(law.values, [0.0, 0.5, 0.5])
    with pytest.raises(DomainError):
        occupation_frequencies(traj, 6, 8)


def test_coupled_ensemble_outcomes(small_params):
    params = small_params.model()
    ensemble = coupled_ensemble(
        params, 0, 50, 5.0, 300, master_seed=4, checkpoints=[0.5, 1.0, 2.0]
    )
    assert ensemble.replications == 300
    assert ensemble.w_states.shape == (300, 3)
    assert np.all(ensemble.w_states <= ensemble.z_states)
    coalesced = ensemble.tau_couple <= 1.0
    np.testing.assert_array_equal(
        ensemble.w_states[coalesced, 1], ensemble.z_states[coalesced, 1]
    )
    assert np.all(ensemble.tau_exit == 0.0)


def test_coupled_ensemble_from_equal_states(small_params):
    ensemble = coupled_ensemble(small_params.model(), 20, 20, 1.0, 50, master_seed=1)
    np.testing.assert_array_equal(ensemble.tau_couple, 0.0)


def test_coupled_ensemble_is_reproducible(small_params):
    params = small_params.model()
    kwargs = dict(exit_after=0.5, checkpoints=[0.5, 1.5], release_after=1.5)
    first = coupled_ensemble(params, 0, 50, 3.0, 1100, 77, **kwargs)
    second = coupled_ensemble(params, 0, 50, 3.0, 1100, 77, workers=2, **kwargs)
    np.testing.assert_array_equal(first.tau_couple, second.tau_couple)
    np.testing.assert_array_equal(first.tau_exit, second.tau_exit)
    np.testing.assert_array_equal(first.z_states, second.z_states)
    assert np.all((first.tau_exit >= 0.5) | np.isinf(first.tau_exit))


def test_release_must_follow_checkpoints(small_params):
    with pytest.raises(DomainError):
        coupled_ensemble(
            small_params.model(), 0, 50, 3.0, 10, 1, checkpoints=[2.0], release_after=1.0
        )


def test_trajectory_dump(small_params, tmp_path):
    params = small_params.model()
    paths = [simulate_path(params, 0, 0.5, seed=i) for i in range(3)]
    target = tmp_path / "paths.csv"
    write_trajectories_csv(target, paths)
    table = pd.read_csv(target)
    assert list(table.columns) == ["replication", "event_index", "time", "state"]
    assert len(table) == sum(path.states.size for path in paths)
    assert target.read_text().splitlines()[1] == "0,0,0,0"
