import math

import numpy as np
import pytest
from hypothesis import given, settings

from pathentropy import CompartmentalSystem, chain_stats
from pathentropy.entropy import (
    discrete_entropy,
    entropy_rate_per_jump,
    entropy_rate_per_time,
    entropy_report,
    exponential_entropy,
    one_pool_equivalent,
    one_pool_from_transit,
    path_entropy,
    path_entropy_decomposition,
    poisson_entropy_rate,
)
from pathentropy.errors import NonpositiveRateError, NotADistributionError
from pathentropy.maxent import TransitConstraintProblem, maxent_fixed_transit
from pathentropy.models import table1_systems

from conftest import systems


@pytest.mark.parametrize("lam, expected", [(1.0, 1.0), (0.0, 0.0), (math.e, 0.0), (2.0, 2 * (1 - math.log(2)))])
def test_poisson_entropy_rate(lam, expected):
    assert poisson_entropy_rate(lam) == pytest.approx(expected, abs=1e-15)


def test_poisson_rate_maximum_at_one():
    grid = np.linspace(0.01, 5, 2000)
    vals = [poisson_entropy_rate(x) for x in grid]
    assert grid[int(np.argmax(vals))] == pytest.approx(1.0, abs=5e-3)


@pytest.mark.parametrize("lam, expected", [(1.0, 1.0), (math.e, 0.0), (math.e**2, -1.0)])
def test_exponential_entropy(lam, expected):
    assert exponential_entropy(lam) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_exponential_entropy_rejects_nonpositive(lam):
    with pytest.raises(NonpositiveRateError):
        exponential_entropy(lam)


def test_discrete_entropy():
    assert discrete_entropy([0.5, 0.5]) == pytest.approx(math.log(2))
    assert discrete_entropy([1, 0]) == 0.0
    assert discrete_entropy([1 / 3] * 3) == pytest.approx(math.log(3))
    with pytest.raises(NotADistributionError):
        discrete_entropy([0.5, 0.6])
    with pytest.raises(NotADistributionError):
        discrete_entropy([1.5, -0.5])


def test_path_entropy_examples(serial, feedback):
    assert path_entropy(serial) == pytest.approx(2.0)
    assert path_entropy(feedback) == pytest.approx(5.39, abs=5e-3)
    for lam in (0.3, 1.0, 4.0):
        one = CompartmentalSystem([2.0], [[-lam]])
        assert path_entropy(one) == pytest.approx(1 - math.log(lam))


def test_path_entropy_oracle_feedback():
    # independent check: entry 0, visits (2, 2), pool 1 always jumps to 2,
    # pool 2 splits 1/2 : 1/2, all sojourns Exp(1)
    sys = table1_systems()[3]
    expected = 2 * 0 + 2 * math.log(2) + 4 * 1.0
    assert path_entropy(sys) == pytest.approx(expected, rel=1e-14)


def test_decomposition_examples(serial, parallel):
    d = path_entropy_decomposition(serial)
    assert (d.entry, d.jump, d.sojourn) == pytest.approx((0, 0, 2))
    d = path_entropy_decomposition(parallel)
    assert (d.entry, d.jump, d.sojourn) == pytest.approx((math.log(2), 0, 1))
    lam = 0.4
    d = path_entropy_decomposition(CompartmentalSystem([1], [[-lam]]))
    assert (d.entry, d.jump, d.sojourn) == pytest.approx((0, 0, 1 - math.log(lam)))


def test_rates_examples(serial, parallel):
    rows = table1_systems()
    assert entropy_rate_per_time(serial) == pytest.approx(1.0)
    assert entropy_rate_per_time(parallel) == pytest.approx(1 + math.log(2))
    assert entropy_rate_per_time(rows[6]) == pytest.approx(1 + math.log(3))
    assert entropy_rate_per_jump(serial) == pytest.approx(2 / 3)
    assert entropy_rate_per_jump(rows[4]) == pytest.approx(1.3598, abs=5e-5)
    lam = 0.6
    assert entropy_rate_per_jump(CompartmentalSystem([1], [[-lam]])) == pytest.approx(0.5 * (1 - math.log(lam)))


def test_one_pool_equivalent():
    op = one_pool_from_transit(1.0)
    assert (op.lam, op.H, op.theta, op.theta_J) == pytest.approx((1, 1, 1, 0.5))
    op = one_pool_from_transit(2.0)
    assert (op.lam, op.H) == pytest.approx((0.5, 1 + math.log(2)))
    with pytest.raises(NonpositiveRateError):
        one_pool_from_transit(0.0)
    op = one_pool_equivalent(table1_systems()[3])
    assert op.lam == pytest.approx(0.25)


def test_entropy_report_consistency(feedback):
    rep = entropy_report(feedback)
    assert rep.path_entropy == pytest.approx(rep.entry_entropy + rep.jump_entropy + rep.sojourn_entropy)
    assert rep.rate_per_time * rep.mean_transit == pytest.approx(rep.path_entropy)


def test_sojourn_entropy_can_be_negative():
    fast = CompartmentalSystem([1, 0], [[-10.0, 0], [10.0, -10.0]])
    d = path_entropy_decomposition(fast)
    assert d.sojourn < 0
    assert d.entry >= 0 and d.jump >= 0


def test_scale_law(feedback):
    base = path_entropy_decomposition(feedback)
    for xi in (0.2, 3.0, 17.0):
        d = path_entropy_decomposition(feedback.scaled(xi))
        assert d.entry == pytest.approx(base.entry, abs=1e-14)
        assert d.jump == pytest.approx(base.jump, rel=1e-12)
        n = chain_stats(feedback).expected_visits.sum()
        assert d.sojourn == pytest.approx(base.sojourn - n * math.log(xi), rel=1e-12)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_perturbing_maxent_symmetric_system_lowers_entropy(d):
    sys = maxent_fixed_transit(TransitConstraintProblem(d, (1.0,) + (0.0,) * (d - 1), 1.0))
    H0 = path_entropy(sys)
    for eps in (1e-3, 1e-2):
        B = np.array(sys.B)
        B[1, 0] += eps
        B[0, 0] -= eps
        assert path_entropy(CompartmentalSystem(sys.u, B)) < H0


@settings(max_examples=500, deadline=None)
@given(systems())
def test_decomposition_and_rate_identities(sys):
    H = path_entropy(sys)
    dec = path_entropy_decomposition(sys)
    assert abs(H - dec.total) <= 1e-10 * max(1.0, abs(H))
    st = chain_stats(sys)
    assert entropy_rate_per_time(sys) * st.mean_transit == pytest.approx(H, rel=1e-12, abs=1e-300)
    assert entropy_rate_per_jump(sys) * st.expected_jumps == pytest.approx(H, rel=1e-12, abs=1e-300)
