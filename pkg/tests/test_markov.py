import math

import numpy as np
import pytest

from ruinlab.errors import DegenerateChainError, ModelError
from ruinlab.markov import (
    at_most_one_switch_probability,
    fundamental_matrix,
    sample_environment_path,
    single_switch_density,
    stationary_distribution,
)
from ruinlab.model import EnvironmentModel
from ruinlab.numerics import adaptive_quadrature, rng_stream
from tests.builders import BASE_RATES, random_generator

BASE_ENV = EnvironmentModel.starting_in(BASE_RATES)
SYMMETRIC_3 = EnvironmentModel.starting_in([[-2.0, 1.0, 1.0], [1.0, -2.0, 1.0], [1.0, 1.0, -2.0]])


# ============================================================================
# Stationary law and fundamental matrix
# ============================================================================


def test_stationary_law_of_base_chain():
    assert stationary_distribution(BASE_ENV).pi == pytest.approx([2 / 3, 1 / 3], abs=1e-12)


def test_fundamental_matrix_of_base_chain():
    law = stationary_distribution(BASE_ENV)
    upsilon = fundamental_matrix(BASE_ENV, law).upsilon
    assert upsilon == pytest.approx(np.array([[1 / 9, -1 / 9], [-2 / 9, 2 / 9]]), abs=1e-12)


def test_single_state_chain():
    env = EnvironmentModel.starting_in([[0.0]])
    law = stationary_distribution(env)
    assert law.pi.tolist() == [1.0]
    assert fundamental_matrix(env, law).upsilon == pytest.approx(np.zeros((1, 1)))


@pytest.mark.parametrize("n_states", [2, 3, 5, 8])
def test_random_chain_identities(n_states):
    rng = np.random.default_rng(n_states)
    for _ in range(25):
        env = EnvironmentModel.starting_in(random_generator(n_states, rng))
        law = stationary_distribution(env)
        upsilon = fundamental_matrix(env, law).upsilon
        ones = np.ones(n_states)
        assert np.all(law.pi >= 0)
        assert law.pi.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(law.pi @ env.rates)) < 1e-10
        assert np.max(np.abs(upsilon @ ones)) < 1e-10
        assert np.max(np.abs(law.pi @ upsilon)) < 1e-10
        # Q Upsilon = Pi - I
        assert np.max(np.abs(env.rates @ upsilon - (law.matrix - np.eye(n_states)))) < 1e-10


def test_reducible_chain_fails_to_solve():
    env = EnvironmentModel.starting_in([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(DegenerateChainError):
        stationary_distribution(env)


# ============================================================================
# At most one switch
# ============================================================================


def test_at_most_one_switch_base_chain():
    assert at_most_one_switch_probability(BASE_ENV, 0, 1.0) == pytest.approx(2 * math.exp(-1) - math.exp(-2))


def test_at_most_one_switch_at_time_zero():
    assert at_most_one_switch_probability(BASE_ENV, 1, 0.0) == 1.0


@pytest.mark.parametrize("horizon", [0.1, 1.0, 3.0])
def test_equal_exit_rates_use_the_limit(horizon):
    expected = (1 + 2 * horizon) * math.exp(-2 * horizon)
    assert at_most_one_switch_probability(SYMMETRIC_3, 0, horizon) == pytest.approx(expected, rel=1e-12)


def test_at_most_one_switch_is_decreasing_in_horizon():
    values = [at_most_one_switch_probability(BASE_ENV, 0, t) for t in np.linspace(0.0, 10.0, 41)]
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:], strict=False))


def test_negative_horizon_is_rejected():
    with pytest.raises(ModelError):
        at_most_one_switch_probability(BASE_ENV, 0, -1.0)


@pytest.mark.parametrize("j", [0, 1])
def test_switch_density_integrates_to_the_switch_mass(j):
    horizon = 2.0
    k = 1 - j
    mass = adaptive_quadrature(lambda tau: single_switch_density(BASE_ENV, j, k, tau, horizon), 0.0, horizon).value
    stay = math.exp(-float(BASE_ENV.exit_rates[j]) * horizon)
    assert mass + stay == pytest.approx(at_most_one_switch_probability(BASE_ENV, j, horizon), rel=1e-9)


def test_switch_density_is_zero_without_a_transition():
    env = EnvironmentModel.starting_in([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    assert single_switch_density(env, 0, 2, 0.5, 1.0) == 0.0


def test_switch_count_frequency_matches():
    rng = rng_stream(11, 0)
    n = 100_000
    at_most_one = sum(sample_environment_path(BASE_ENV, 0, 1.0, rng).switches <= 1 for _ in range(n))
    p = at_most_one_switch_probability(BASE_ENV, 0, 1.0)
    assert abs(at_most_one / n - p) < 4 * math.sqrt(p * (1 - p) / n)


# ============================================================================
# Path sampling
# ============================================================================


def test_path_invariants():
    rng = rng_stream(5, 0)
    for _ in range(200):
        path = sample_environment_path(SYMMETRIC_3, 1, 4.0, rng)
        assert path.states[0] == 1
        assert path.entry_times[0] == 0.0
        assert np.all(np.diff(path.entry_times) > 0)
        assert np.all(path.entry_times < 4.0)
        assert np.all(path.states[1:] != path.states[:-1])
        assert path.durations.sum() == pytest.approx(4.0)
        assert path.occupation_times(3).sum() == pytest.approx(4.0)


def test_long_run_occupation_matches_stationary_law():
    rng = rng_stream(1, 0)
    horizon = 20_000.0
    occupation = sample_environment_path(BASE_ENV, 0, horizon, rng).occupation_times(2) / horizon
    assert occupation == pytest.approx([2 / 3, 1 / 3], abs=0.02)


def test_absorbing_state_stops_the_path():
    env = EnvironmentModel.starting_in([[0.0, 0.0], [1.0, -1.0]])
    path = sample_environment_path(env, 0, 5.0, rng_stream(0, 0))
    assert path.switches == 0
    assert path.durations.tolist() == [5.0]
