"""One-particle statistics of an equilibrium compartmental system.

A particle entering the system performs an absorbing continuous-time Markov
chain on the pools ``0..d-1`` plus the absorbing environment (index ``d``).
Its generator is never built explicitly; everything derives from ``(B, z)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import SingularMatrixError, ZeroInputError
from .system import CompartmentalSystem, steady_state


@dataclass(frozen=True, eq=False)
class ChainStats:
    beta: np.ndarray
    lam: np.ndarray
    jump_matrix: np.ndarray
    expected_visits: np.ndarray
    expected_jumps: float
    mean_occupation: np.ndarray
    mean_transit: float
    exit_distribution: np.ndarray


def entry_distribution(sys: CompartmentalSystem) -> np.ndarray:
    total = sys.input_total
    if total <= 0:
        raise ZeroInputError("input vector sums to zero")
    return sys.u / total


def jump_probabilities(sys: CompartmentalSystem) -> np.ndarray:
    """Column-stochastic ``(d+1, d)`` matrix of the embedded jump chain.

    Row ``d`` holds the exit probabilities ``z_j / lambda_j``.  A pool with
    zero total exit rate gets an all-zero column and a warning.
    """
    d = sys.d
    P = np.zeros((d + 1, d))
    for j in range(d):
        lam = sys.lam[j]
        if lam <= 0.0:
            warnings.warn(f"pool {j + 1} has zero exit rate; its jump column is empty")
            continue
        P[:d, j] = sys.B[:, j] / lam
        P[j, j] = 0.0
        P[d, j] = sys.z[j] / lam
    return P


def zero_rate_pools(sys: CompartmentalSystem) -> list[int]:
    return [j for j in range(sys.d) if sys.lam[j] <= 0.0]


def expected_visits(sys: CompartmentalSystem, method: str = "closed") -> np.ndarray:
    """Expected number of visits to each pool.

    ``method="closed"`` uses ``lambda_i x*_i / |u|``;
    ``method="fundamental"`` solves ``(I - P_S) n = beta`` instead.
    """
    if method == "closed":
        return sys.lam * steady_state(sys).x_star / sys.input_total
    if method == "fundamental":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            P = jump_probabilities(sys)
        A = np.eye(sys.d) - P[: sys.d, :]
        try:
            lu = linalg.lu_factor(A, check_finite=True)
        except (ValueError, linalg.LinAlgError) as exc:
            raise SingularMatrixError(str(exc)) from exc
        if np.any(np.diag(lu[0]) == 0.0):
            raise SingularMatrixError("I - P restricted to the pools is singular")
        return linalg.lu_solve(lu, entry_distribution(sys))
    raise ValueError(f"unknown method {method!r}")


def expected_jumps(sys: CompartmentalSystem) -> float:
    # the final jump out of the system counts as well
    return math.fsum(expected_visits(sys)) + 1.0


def mean_transit_time(sys: CompartmentalSystem) -> float:
    """Stocks over fluxes: ``|x*| / |u|``."""
    return math.fsum(steady_state(sys).x_star) / sys.input_total


def mean_occupation_times(sys: CompartmentalSystem) -> np.ndarray:
    return steady_state(sys).x_star / sys.input_total


def exit_pool_distribution(sys: CompartmentalSystem) -> np.ndarray:
    """Probability that the particle leaves the system from each pool."""
    return sys.z * steady_state(sys).x_star / sys.input_total


def transit_time_density(sys: CompartmentalSystem, t, method: str = "expm"):
    """Phase-type density ``z^T exp(tB) beta`` of the transit time.

    ``t`` may be a scalar or an array.  ``method="ode"`` integrates
    ``w' = B w, w(0) = beta`` instead of forming matrix exponentials, which is
    preferable when ``t * |B|`` is large.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be nonnegative")
    beta = entry_distribution(sys)
    if method == "expm":
        vals = np.array([sys.z @ (linalg.expm(tk * sys.B) @ beta) for tk in ts])
    elif method == "ode":
        order = np.argsort(ts)
        t_sorted = ts[order]
        t_end = float(t_sorted[-1])
        if t_end == 0.0:
            vals = np.full(ts.shape, float(sys.z @ beta))
        else:
            sol = integrate.solve_ivp(
                lambda _, w: sys.B @ w,
                (0.0, t_end),
                beta,
                method="LSODA",
                t_eval=t_sorted,
                jac=lambda *_: sys.B,
                rtol=1e-10,
                atol=1e-13,
            )
            vals = np.empty(ts.shape)
            vals[order] = sys.z @ sol.y
    else:
        raise ValueError(f"unknown method {method!r}")
    vals = np.maximum(vals, 0.0)
    return float(vals[0]) if np.ndim(t) == 0 else vals


def chain_stats(sys: CompartmentalSystem) -> ChainStats:
    cached = sys.__dict__.get("_chain_stats")
    if cached is not None:
        return cached
    visits = expected_visits(sys)
    stats = ChainStats(
        beta=entry_distribution(sys),
        lam=sys.lam,
        jump_matrix=jump_probabilities(sys),
        expected_visits=visits,
        expected_jumps=math.fsum(visits) + 1.0,
        mean_occupation=mean_occupation_times(sys),
        mean_transit=mean_transit_time(sys),
        exit_distribution=exit_pool_distribution(sys),
    )
    for arr in (stats.beta, stats.jump_matrix, stats.expected_visits,
                stats.mean_occupation, stats.exit_distribution):
        arr.setflags(write=False)
    sys.__dict__["_chain_stats"] = stats
    return stats
