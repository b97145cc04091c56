import math

import numpy as np
import pytest

from pathentropy import CompartmentalSystem, chain_stats, path_entropy, steady_state
from pathentropy.entropy import entropy_rate_per_time
from pathentropy.errors import EmptyFeasibleSetError, NonpositiveTargetError
from pathentropy.maxent import (
    GammaConstraints,
    SteadyStateConstraintProblem,
    TransitConstraintProblem,
    entropy_at_fixed_stocks,
    family_values,
    feasible_interval,
    identify,
    local_maximize_4d,
    maxent_fixed_steady_state,
    maxent_fixed_transit,
    maxent_steady_state_dual,
    objective,
    params_to_matrix,
    random_steady_competitor,
    random_transit_competitor,
)


# --- fixed mean transit time -------------------------------------------------------


def test_transit_one_pool():
    tau = 3.5
    sys = maxent_fixed_transit(TransitConstraintProblem(1, (2.0,), tau))
    np.testing.assert_allclose(sys.B, [[-1 / tau]])


def test_transit_three_pools():
    sys = maxent_fixed_transit(TransitConstraintProblem(3, (1, 0, 0), 1.0))
    np.testing.assert_array_equal(np.diag(sys.B), [-3, -3, -3])
    assert np.all(sys.B[~np.eye(3, dtype=bool)] == 1)
    assert chain_stats(sys).mean_transit == pytest.approx(1.0)


@pytest.mark.parametrize("d, T", [(2, 2.0), (3, 0.5), (4, 7.0)])
def test_transit_exit_rates_all_equal(d, T):
    sys = maxent_fixed_transit(TransitConstraintProblem(d, (1.0,) * d, T))
    assert np.all(sys.z == sys.z[0])
    # z comes from a column sum, so it can differ from 1/T by the rounding of the diagonal
    assert abs(sys.z[0] - 1.0 / T) <= 2 * np.spacing(sys.lam[0])
    assert chain_stats(sys).mean_transit == pytest.approx(T, rel=1e-12)


def test_transit_problem_validation():
    with pytest.raises(NonpositiveTargetError):
        TransitConstraintProblem(2, (1, 0), 0.0)
    with pytest.raises(ValueError):
        TransitConstraintProblem(2, (1, 0, 0), 1.0)
    with pytest.raises(ValueError):
        TransitConstraintProblem(2, (0, 0), 1.0)


def test_transit_beats_1000_random_members(rng):
    prob = TransitConstraintProblem(2, (1.0, 0.0), 2.0)
    H_star = path_entropy(maxent_fixed_transit(prob))
    for _ in range(1000):
        c = random_transit_competitor(2, prob.u, 2.0, rng)
        assert chain_stats(c).mean_transit == pytest.approx(2.0, rel=1e-10)
        assert path_entropy(c) < H_star - 1e-9


# --- fixed steady state ---------------------------------------------------------------


def test_steady_symmetric_case():
    sys = maxent_fixed_steady_state(SteadyStateConstraintProblem((1.0, 1.0)))
    np.testing.assert_allclose(sys.B, [[-2, 1], [1, -2]])
    np.testing.assert_allclose(sys.z, [1, 1])


def test_steady_four_one():
    sys = maxent_fixed_steady_state(SteadyStateConstraintProblem((4.0, 1.0)))
    assert sys.B[1, 0] == 0.5 and sys.B[0, 1] == 2.0
    np.testing.assert_allclose(sys.z, [0.5, 1.0])
    # mass balance under the implied input sqrt(x*)
    np.testing.assert_allclose(sys.B @ np.array([4.0, 1.0]) + sys.u, 0.0, atol=1e-14)
    np.testing.assert_allclose(steady_state(sys).x_star, [4, 1])


def test_steady_reciprocity():
    x = np.array([0.3, 2.0, 5.0, 9.0])
    sys = maxent_fixed_steady_state(SteadyStateConstraintProblem(tuple(x)))
    for i in range(4):
        for j in range(4):
            if i != j:
                assert sys.B[i, j] * sys.B[j, i] == pytest.approx(1.0)
    np.testing.assert_allclose(steady_state(sys).x_star, x, rtol=1e-12)


def test_steady_warns_when_input_replaced():
    with pytest.warns(UserWarning, match="sqrt"):
        sys = maxent_fixed_steady_state(SteadyStateConstraintProblem((4.0, 1.0), (1.0, 0.0)))
    np.testing.assert_allclose(sys.u, [2, 1])


def test_steady_rejects_nonpositive_target():
    with pytest.raises(NonpositiveTargetError):
        SteadyStateConstraintProblem((0.0, 1.0))


def test_dual_reproduces_closed_form():
    x = (4.0, 1.0, 2.5)
    closed = maxent_fixed_steady_state(SteadyStateConstraintProblem(x))
    dual = maxent_steady_state_dual(x, closed.u)
    np.testing.assert_allclose(dual.B, closed.B, rtol=1e-8)


@pytest.mark.parametrize("u", [(1.0, 0.0), (0.2, 0.9), (3.0, 3.0)])
def test_dual_general_input_hits_stocks_and_beats_competitors(u, rng):
    x = (4.0, 1.0)
    sys = maxent_steady_state_dual(x, u)
    np.testing.assert_allclose(steady_state(sys).x_star, x, rtol=1e-9)
    H = path_entropy(sys)
    for _ in range(200):
        c = random_steady_competitor(u, x, rng)
        np.testing.assert_allclose(steady_state(c).x_star, x, rtol=1e-9)
        assert path_entropy(c) < H


def test_entropy_at_fixed_stocks_matches_path_entropy(rng):
    x = (4.0, 1.0)
    c = random_steady_competitor((1.0, 0.5), x, rng)
    assert entropy_at_fixed_stocks(c.B, c.z, c.u, x) == pytest.approx(path_entropy(c), rel=1e-12)


# --- objective dispatch ------------------------------------------------------------------


def test_objective_dispatch(feedback):
    assert objective(feedback, "path_entropy") == path_entropy(feedback)
    assert objective(feedback, "rate-per-time") == entropy_rate_per_time(feedback)
    assert objective(feedback, "rate_per_jump") == pytest.approx(path_entropy(feedback) / 5)
    with pytest.raises(ValueError):
        objective(feedback, "nope")


def test_objective_on_transit_solution_matches_formula():
    d, T = 3, 1.0
    sys = maxent_fixed_transit(TransitConstraintProblem(d, (1, 0, 0), T))
    lam = d - 1 + 1 / T
    # entry 0, jump entropy log d per visit, sojourn 1 - log lam per visit
    visits = lam * T
    assert objective(sys, "path_entropy") == pytest.approx(visits * (math.log(d) + 1 - math.log(lam)))


# --- identification ------------------------------------------------------------------------


def test_elimination_identity_symbolic():
    g = GammaConstraints(3.0, 5.0, 4.0)
    rng = np.random.default_rng(1)
    for b12 in rng.uniform(1, 3, 20):
        p = feasible_interval(g).segments[0].params(b12)
        np.testing.assert_allclose(g.residuals(p), 0.0, atol=1e-12)
        B = params_to_matrix(p)
        # transfer function (s + g1) / (s^2 + g2 s + g3) from the realisation
        assert -np.trace(B) == pytest.approx(g.gamma2)
        assert np.linalg.det(B) == pytest.approx(g.gamma3)
        assert -B[1, 1] == pytest.approx(g.gamma1)


def test_feasible_interval_examples():
    fs = feasible_interval(GammaConstraints(3, 5, 4))
    assert GammaConstraints(3, 5, 4).product == 2
    assert fs.b12_interval == pytest.approx((1.0, 3.0))
    fs = feasible_interval(GammaConstraints(1, 2, 1))
    assert {s.kind for s in fs.segments} == {"b21_zero", "b12_zero"}
    with pytest.raises(EmptyFeasibleSetError):
        feasible_interval(GammaConstraints(1, 1, 5))
    with pytest.raises(EmptyFeasibleSetError):
        feasible_interval(GammaConstraints(3, 5, 4), bounds=[(0, 0.5)] * 4)


def test_family_values_match_generic(rng):
    for _ in range(20):
        p = rng.uniform(0.05, 3, 4)
        H, ET, EN = family_values(p)
        sys = CompartmentalSystem([1, 0], params_to_matrix(p))
        assert H == pytest.approx(path_entropy(sys), rel=1e-12)
        assert ET == pytest.approx(chain_stats(sys).mean_transit, rel=1e-12)
        assert EN == pytest.approx(chain_stats(sys).expected_jumps, rel=1e-12)


@pytest.fixture(scope="module")
def id354():
    return identify(GammaConstraints(3, 5, 4))


def test_identify_reference_case(id354):
    r = id354
    assert r.best_rate == pytest.approx(1.916, abs=0.02)
    b12, b21, _, _ = r.best_params
    assert b12 * b21 == pytest.approx(2.0, abs=1e-6)
    assert b21 == pytest.approx(1.098, abs=5e-3)
    assert b12 == pytest.approx(1.821, abs=5e-3)
    assert abs(r.best_value - r.scan_value) <= 1e-4
    assert r.best_value <= r.scan_value + 1e-6
    assert np.abs(r.constraints.residuals(r.best_params)).max() <= 1e-8
    for m in r.local_maxima:
        assert np.abs(r.constraints.residuals(m.params)).max() <= 1e-8
        assert r.best_rate >= m.theta - 1e-15
    assert r.n_starts == 26**4
    assert 0 < r.n_feasible < r.n_starts
    assert r.n_converged == r.n_feasible


def test_identify_path_entropy_maximizer_differs(id354):
    h = identify(GammaConstraints(3, 5, 4), objective="path_entropy")
    assert abs(h.best_params[0] - id354.best_params[0]) > 0.1
    assert h.best_rate < id354.best_rate
    assert path_entropy(id354.best_system) < h.best_value


def test_identify_projection_nearest_agrees(id354):
    r = identify(GammaConstraints(3, 5, 4), grid_mesh=0.5, projection="nearest")
    assert r.best_value == pytest.approx(id354.best_value, abs=1e-9)
    assert r.n_feasible == r.n_starts


def test_identify_worker_invariance():
    a = identify(GammaConstraints(3, 5, 4), grid_mesh=0.5, workers=1)
    b = identify(GammaConstraints(3, 5, 4), grid_mesh=0.5, workers=4)
    assert a.best_params == b.best_params
    np.testing.assert_array_equal(a.starts.params, b.starts.params)


def test_identify_degenerate_interval():
    # pinning B12 leaves a single feasible model
    bounds = [(2.0, 2.0), (0, 5), (0, 5), (0, 5)]
    r = identify(GammaConstraints(3, 5, 4), bounds=bounds)
    assert r.n_starts == 0
    assert r.best_params[0] == 2.0 and r.best_params[1] == pytest.approx(1.0)


def test_identify_zero_product_branches():
    r = identify(GammaConstraints(1, 2, 1), grid_mesh=0.25)
    assert r.best_value == pytest.approx(r.scan_value, abs=1e-9)
    assert min(r.best_params[:2]) == 0.0


def test_identify_empty():
    with pytest.raises(EmptyFeasibleSetError):
        identify(GammaConstraints(1, 1, 5))


def test_identify_rejects_bad_mesh():
    with pytest.raises(ValueError):
        identify(GammaConstraints(3, 5, 4), grid_mesh=0.0)


def test_four_dimensional_local_search_agrees(id354):
    p, v, ok = local_maximize_4d(GammaConstraints(3, 5, 4), (2.0, 1.0, 1.0, 1.0))
    assert ok
    assert v == pytest.approx(id354.best_value, abs=1e-6)
