import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy import integrate

from pathentropy import CompartmentalSystem, chain_stats
from pathentropy.chain import (
    entry_distribution,
    exit_pool_distribution,
    expected_jumps,
    expected_visits,
    jump_probabilities,
    mean_occupation_times,
    mean_transit_time,
    transit_time_density,
    zero_rate_pools,
)
from pathentropy.models import emanuel, table1_systems

from conftest import random_system, systems


def test_entry_distribution_examples(serial, parallel):
    np.testing.assert_allclose(entry_distribution(emanuel()), np.array([77, 0, 36, 0, 0]) / 113)
    np.testing.assert_array_equal(entry_distribution(serial), [1, 0])
    np.testing.assert_array_equal(entry_distribution(parallel), [0.5, 0.5])


def test_jump_probabilities(feedback, parallel):
    P = jump_probabilities(feedback)
    np.testing.assert_allclose(P[:, 0], [0, 1, 0])
    np.testing.assert_allclose(P[:, 1], [0.5, 0, 0.5])
    np.testing.assert_allclose(jump_probabilities(parallel), [[0, 0], [0, 0], [1, 1]])
    np.testing.assert_allclose(jump_probabilities(CompartmentalSystem([1], [[-3.0]])), [[0], [1]])


def test_expected_visits_examples(feedback, serial):
    np.testing.assert_allclose(expected_visits(feedback), [2, 2])
    assert expected_jumps(feedback) == pytest.approx(5)
    np.testing.assert_allclose(expected_visits(serial), [1, 1])
    assert expected_jumps(serial) == pytest.approx(3)
    assert expected_jumps(CompartmentalSystem([1], [[-0.3]])) == pytest.approx(2)


def test_mean_transit_examples(serial, feedback):
    assert mean_transit_time(serial) == pytest.approx(2)
    assert mean_transit_time(feedback) == pytest.approx(4)
    assert mean_transit_time(table1_systems()[6]) == pytest.approx(1)


def test_occupation_and_exit(serial, parallel, feedback):
    np.testing.assert_allclose(mean_occupation_times(serial), [1, 1])
    np.testing.assert_allclose(mean_occupation_times(parallel), [0.5, 0.5])
    np.testing.assert_allclose(mean_occupation_times(CompartmentalSystem([1], [[-4.0]])), [0.25])
    np.testing.assert_allclose(exit_pool_distribution(serial), [0, 1])
    np.testing.assert_allclose(exit_pool_distribution(parallel), [0.5, 0.5])
    np.testing.assert_allclose(exit_pool_distribution(feedback), [0, 1])


def test_zero_rate_pool_column_is_empty():
    # a pool with no exit rate cannot be part of a valid system, so build the matrix directly
    class Stub:
        d = 2
        B = np.array([[-1.0, 0.0], [1.0, 0.0]])
        z = np.array([0.0, 0.0])
        lam = np.array([1.0, 0.0])

    with pytest.warns(UserWarning):
        P = jump_probabilities(Stub())
    np.testing.assert_array_equal(P[:, 1], 0.0)
    assert zero_rate_pools(Stub()) == [1]


@pytest.mark.parametrize("method", ["expm", "ode"])
def test_density_one_pool_and_erlang(method, serial):
    lam = 1.7
    one = CompartmentalSystem([1], [[-lam]])
    t = np.array([0.0, 0.3, 1.0, 4.0])
    np.testing.assert_allclose(transit_time_density(one, t, method), lam * np.exp(-lam * t), rtol=1e-8)
    assert transit_time_density(one, 0.0, method) == pytest.approx(lam)
    np.testing.assert_allclose(transit_time_density(serial, t, method), t * np.exp(-t), rtol=1e-7, atol=1e-12)


def test_density_scalar_in_scalar_out(serial):
    assert isinstance(transit_time_density(serial, 1.0), float)


def test_density_rejects_negative_time(serial):
    with pytest.raises(ValueError):
        transit_time_density(serial, -1.0)


@pytest.mark.parametrize("seed", range(5))
def test_density_integrates_to_one(seed):
    sys = random_system(np.random.default_rng(seed), 1 + seed % 4)
    total, _ = integrate.quad(lambda t: transit_time_density(sys, t), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)
    mean, _ = integrate.quad(lambda t: t * transit_time_density(sys, t), 0, np.inf, limit=200)
    assert mean == pytest.approx(mean_transit_time(sys), rel=1e-5)


def test_density_methods_agree_on_slow_system():
    sys = emanuel()
    t = np.array([1.0, 50.0, 400.0])
    a = transit_time_density(sys, t, "expm")
    b = transit_time_density(sys, t, "ode")
    np.testing.assert_allclose(a, b, rtol=1e-6)


@settings(max_examples=200, deadline=None)
@given(systems())
def test_chain_identities(sys):
    st = chain_stats(sys)
    assert st.beta.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(st.beta >= 0)
    cols = st.jump_matrix.sum(axis=0)
    np.testing.assert_allclose(cols[sys.lam > 0], 1.0, atol=1e-12)
    np.testing.assert_array_equal(np.diag(st.jump_matrix[: sys.d]), 0.0)
    fund = expected_visits(sys, method="fundamental")
    np.testing.assert_allclose(st.expected_visits, fund, rtol=1e-9, atol=1e-12)
    assert st.expected_jumps == pytest.approx(st.expected_visits.sum() + 1, rel=1e-14)
    assert math.fsum(st.mean_occupation) == pytest.approx(st.mean_transit, rel=1e-12)
    assert st.expected_jumps >= 2 - 1e-12
    assert math.fsum(st.exit_distribution) == pytest.approx(1.0, abs=1e-12)


def test_chain_stats_is_cached(feedback):
    assert chain_stats(feedback) is chain_stats(feedback)
