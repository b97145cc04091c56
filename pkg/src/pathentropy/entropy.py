"""Path entropy, entropy rates and their decompositions (all in nats)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .chain import chain_stats
from .errors import NonpositiveRateError, NotADistributionError
from .system import CompartmentalSystem, steady_state

# rates below this are treated as exact zeros in x (1 - log x)
_TINY = 1e-300


def poisson_entropy_rate(lam: float) -> float:
    """Entropy rate ``lam (1 - log lam)`` of a Poisson process; 0 at ``lam = 0``."""
    if lam < 0:
        raise NonpositiveRateError(f"negative rate {lam}")
    if lam < _TINY:
        return 0.0
    return lam * (1.0 - math.log(lam))


def exponential_entropy(lam: float) -> float:
    """Differential entropy of ``Exp(lam)``; negative for ``lam > e``."""
    if not lam > 0:
        raise NonpositiveRateError(f"rate must be positive, got {lam}")
    return 1.0 - math.log(lam)


def discrete_entropy(p, tol: float = 1e-9) -> float:
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0 or np.any(p < -tol) or abs(math.fsum(p) - 1.0) > tol:
        raise NotADistributionError(f"not a probability vector: {p}")
    return math.fsum(-q * math.log(q) for q in p if q > 0.0)


def path_entropy(sys: CompartmentalSystem) -> float:
    """Entropy of a single particle's path through the equilibrium system.

    Evaluated from entry entropy plus the occupation-weighted Poisson entropy
    rates of every internal and external flux.
    """
    x = steady_state(sys).x_star
    total = sys.input_total
    terms = [discrete_entropy(sys.u / total)]
    for j in range(sys.d):
        if x[j] == 0.0:
            continue
        rates = [poisson_entropy_rate(sys.B[i, j]) for i in range(sys.d) if i != j]
        rates.append(poisson_entropy_rate(sys.z[j]))
        terms.append(x[j] / total * math.fsum(rates))
    return math.fsum(terms)


@dataclass(frozen=True)
class Decomposition:
    entry: float
    jump: float
    sojourn: float

    @property
    def total(self) -> float:
        return math.fsum((self.entry, self.jump, self.sojourn))


def path_entropy_decomposition(sys: CompartmentalSystem) -> Decomposition:
    """Split path entropy into entry, jump-target and sojourn-time parts.

    Each visit to pool ``j`` contributes the entropy of the next jump target
    and the differential entropy of an ``Exp(lambda_j)`` sojourn, weighted by
    the expected number of visits.
    """
    st = chain_stats(sys)
    jump, sojourn = [], []
    for j in range(sys.d):
        n = st.expected_visits[j]
        if sys.lam[j] <= 0.0:
            warnings.warn(f"pool {j + 1} has zero exit rate; jump entropy set to 0")
            continue
        if n == 0.0:
            continue
        jump.append(n * discrete_entropy(st.jump_matrix[:, j], tol=1e-8))
        sojourn.append(n * exponential_entropy(sys.lam[j]))
    return Decomposition(
        entry=discrete_entropy(st.beta),
        jump=math.fsum(jump),
        sojourn=math.fsum(sojourn),
    )


def entropy_rate_per_time(sys: CompartmentalSystem) -> float:
    return path_entropy(sys) / chain_stats(sys).mean_transit


def entropy_rate_per_jump(sys: CompartmentalSystem) -> float:
    return path_entropy(sys) / chain_stats(sys).expected_jumps


@dataclass(frozen=True)
class OnePool:
    lam: float
    H: float
    theta: float
    theta_J: float


def one_pool_from_transit(mean_transit: float) -> OnePool:
    if not mean_transit > 0:
        raise NonpositiveRateError("mean transit time must be positive")
    lam = 1.0 / mean_transit
    H = exponential_entropy(lam)
    return OnePool(lam=lam, H=H, theta=poisson_entropy_rate(lam), theta_J=H / 2.0)


def one_pool_equivalent(sys: CompartmentalSystem) -> OnePool:
    """One-pool system with the same mean transit time."""
    return one_pool_from_transit(chain_stats(sys).mean_transit)


@dataclass(frozen=True)
class EntropyReport:
    path_entropy: float
    entry_entropy: float
    jump_entropy: float
    sojourn_entropy: float
    rate_per_time: float
    rate_per_jump: float
    mean_transit: float
    expected_jumps: float
    one_pool: OnePool


def entropy_report(sys: CompartmentalSystem) -> EntropyReport:
    st = chain_stats(sys)
    H = path_entropy(sys)
    dec = path_entropy_decomposition(sys)
    return EntropyReport(
        path_entropy=H,
        entry_entropy=dec.entry,
        jump_entropy=dec.jump,
        sojourn_entropy=dec.sojourn,
        rate_per_time=H / st.mean_transit,
        rate_per_jump=H / st.expected_jumps,
        mean_transit=st.mean_transit,
        expected_jumps=st.expected_jumps,
        one_pool=one_pool_from_transit(st.mean_transit),
    )
