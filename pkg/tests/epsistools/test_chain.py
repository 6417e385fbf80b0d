import math

import numpy as np
import pytest
from pytest import approx  # Used for float comparisons

from epsistools.chain import (
    ModelParams,
    birth_rate,
    c3_constant,
    death_rate,
    derived,
    generator_bands,
    generator_matrix,
    generator_row,
    min_total_rate,
    uniformization_rate,
)
from epsistools.deterministic import drift
from epsistools.errors import DomainError


def test_derived_reference_values(reference_params):
    d = derived(reference_params.model())
    assert reference_params.N == 1000
    assert d.J == approx(math.sqrt(4.25))
    assert d.J == approx(2.0615528, abs=1e-7)
    assert d.x_star == approx(0.2807764, abs=1e-7)
    assert d.x1_star == approx(-1.7807764, abs=1e-7)
    assert d.t_N == approx(1.6753767, abs=1e-6)
    assert d.k == approx(3.5 / (2 * math.sqrt(4.25)))


@pytest.mark.parametrize("fixture_name", ["reference_params", "supercritical_params"])
def test_fixed_points_are_roots_of_the_drift(fixture_name, request):
    params = request.getfixturevalue(fixture_name).model()
    d = derived(params)
    assert 0 < d.x_star < 1
    assert d.x1_star < 0
    assert drift(params, d.x_star) == approx(0.0, abs=1e-12)
    assert drift(params, d.x1_star) == approx(0.0, abs=1e-12)
    assert d.J == approx(params.lam * (d.x_star - d.x1_star))


def test_one_individual_has_zero_cutoff_time(two_state_params):
    assert derived(two_state_params.model()).t_N == 0.0


def test_rates_at_examples():
    params = ModelParams(1.0, 2.0, 0.5, 100)
    assert birth_rate(params, 50) == approx(50.0)
    assert death_rate(params, 75) == approx(150.0)
    assert birth_rate(params, 100) == 0.0
    assert death_rate(params, 0) == 0.0
    assert isinstance(birth_rate(params, 10), float)


def test_rates_accept_arrays():
    params = ModelParams(1.0, 2.0, 0.5, 10)
    states = np.arange(11)
    expected = 1.0 * states * (1 - states / 10) + 0.5 * (10 - states)
    np.testing.assert_allclose(birth_rate(params, states), expected)
    np.testing.assert_allclose(death_rate(params, states), 2.0 * states)


def test_generator_row_sums_to_zero(small_params):
    params = small_params.model()
    row = generator_row(params, 20)
    assert row.down + row.up + row.diag == approx(0.0)
    Q = generator_matrix(params).toarray()
    assert Q.shape == (51, 51)
    np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-12)
    assert np.all(np.diag(Q, 1) >= 0) and np.all(np.diag(Q, -1) >= 0)


def test_total_rates_between_bounds(small_params):
    params = small_params.model()
    down, up, _ = generator_bands(params)
    total = down + up
    assert np.all(total <= uniformization_rate(params) + 1e-12)
    assert np.all(total >= min_total_rate(params) - 1e-12)
    assert uniformization_rate(params) == approx(3.5 * 50)
    assert min_total_rate(params) == approx(0.5 * 50)


def test_large_population_rates_are_finite():
    params = ModelParams(1.0, 2.0, 0.5, 10**9)
    assert math.isfinite(birth_rate(params, 10**9 // 2))


def test_c3_constant(reference_params):
    assert c3_constant(reference_params.model()) == approx(0.7192236, abs=1e-6)


@pytest.mark.parametrize(
    "lam, mu, epsilon, N, name",
    [
        (0.0, 2.0, 0.5, 10, "lambda"),
        (1.0, -2.0, 0.5, 10, "mu"),
        (1.0, 2.0, 0.0, 10, "epsilon"),
        (1.0, 2.0, math.nan, 10, "epsilon"),
        (1.0, 2.0, 0.5, 0, "N"),
        (1.0, 2.0, 0.5, 2.5, "N"),
    ],
)
def test_invalid_params_are_rejected(lam, mu, epsilon, N, name):
    with pytest.raises(DomainError) as excinfo:
        ModelParams(lam, mu, epsilon, N)
    excinfo.match(name)


@pytest.mark.parametrize("x", [-1, 101])
def test_state_outside_range_is_rejected(x):
    with pytest.raises(DomainError) as excinfo:
        birth_rate(ModelParams(1.0, 2.0, 0.5, 100), x)
    excinfo.match("outside")


def test_domain_error_is_a_value_error():
    with pytest.raises(ValueError):
        ModelParams(1.0, 2.0, 0.5, -3)


def test_with_population_and_equality(reference_params):
    params = reference_params.model()
    smaller = params.with_population(10)
    assert smaller.N == 10
    assert smaller.mu == params.mu
    assert smaller == ModelParams(1.0, 2.0, 0.5, 10)
    assert hash(smaller) == hash(ModelParams(1.0, 2.0, 0.5, 10))
    assert params.as_dict() == {"lambda": 1.0, "mu": 2.0, "epsilon": 0.5, "N": 1000}
