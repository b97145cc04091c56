"""Monte Carlo sampling of single-particle paths.

Paths are grouped into fixed-size blocks; block ``k`` draws from its own
``SeedSequence(seed, spawn_key=(k,))`` stream.  Because the block layout does
not depend on the number of workers, estimates are bit-identical for any
worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain import chain_stats
from .errors import MaxJumpsExceeded
from .system import CompartmentalSystem

DEFAULT_MAX_JUMPS = 10_000_000
BLOCK_SIZE = 4096


@dataclass(frozen=True)
class Visit:
    pool: int
    sojourn: float


@dataclass(frozen=True)
class PathSample:
    """A finished path; pools are 0-based."""

    visits: tuple
    exit_from: int
    transit_time: float

    @property
    def n_jumps(self) -> int:
        return len(self.visits) + 1


@dataclass(frozen=True)
class Estimate:
    estimate: float
    std_error: float

    def z_score(self, exact: float) -> float:
        diff = self.estimate - exact
        if self.std_error == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.std_error


@dataclass(frozen=True, eq=False)
class PathTable:
    """Per-path summaries in sampling order."""

    n_jumps: np.ndarray
    transit_time: np.ndarray
    exit_pool: np.ndarray
    log_density: np.ndarray
    occupation: np.ndarray


@dataclass(frozen=True, eq=False)
class MonteCarloEstimates:
    n_paths: int
    seed: int
    mean_transit: Estimate
    mean_jumps: Estimate
    mean_occupation: tuple
    exit_distribution: tuple
    entropy: Estimate


class _Tables:
    """Sampling tables derived once per system."""

    def __init__(self, sys: CompartmentalSystem):
        st = chain_stats(sys)
        d = sys.d
        self.d = d
        self.lam = np.asarray(sys.lam, dtype=float)
        self.beta_cum = _cumulative(st.beta[:, None])[:, 0]
        self.jump_cum = _cumulative(st.jump_matrix)
        rates = np.zeros((d + 1, d))
        rates[:d, :] = sys.B
        rates[d, :] = sys.z
        rates[np.arange(d), np.arange(d)] = 0.0
        with np.errstate(divide="ignore"):
            self.log_rates = np.log(rates)
            self.log_beta = np.log(st.beta)
        self.rates = rates
        self.beta = st.beta


def _cumulative(P: np.ndarray) -> np.ndarray:
    # the last positive entry of every column is pinned to exactly 1
    cum = np.cumsum(P, axis=0)
    for j in range(P.shape[1]):
        nz = np.flatnonzero(P[:, j] > 0)
        if nz.size:
            cum[nz[-1]:, j] = 1.0
    return cum


def _draw(cum: np.ndarray, u: float) -> int:
    k = 0
    while u >= cum[k]:
        k += 1
    return k


def sample_path(sys: CompartmentalSystem, rng: np.random.Generator,
                max_jumps: int = DEFAULT_MAX_JUMPS, tables: _Tables | None = None) -> PathSample:
    """Draw one path: entry pool from beta, then exponential sojourns and jumps."""
    tb = tables or _Tables(sys)
    d = tb.d
    pool = _draw(tb.beta_cum, rng.random())
    visits = []
    transit = 0.0
    while True:
        if len(visits) >= max_jumps:
            raise MaxJumpsExceeded(f"path exceeded {max_jumps} jumps")
        t = -math.log1p(-rng.random()) / tb.lam[pool]
        visits.append(Visit(pool, t))
        transit += t
        nxt = _draw(tb.jump_cum[:, pool], rng.random())
        if nxt == d:
            return PathSample(tuple(visits), pool, transit)
        pool = nxt


def log_path_density(sys: CompartmentalSystem, path: PathSample) -> float:
    """Log of the path density: entry probability, jump rates, survival terms.

    Returns ``-inf`` when the path uses a transition of rate zero.
    """
    tb = _Tables(sys)
    pools = [v.pool for v in path.visits]
    terms = [tb.log_beta[pools[0]]]
    for k, v in enumerate(path.visits):
        nxt = pools[k + 1] if k + 1 < len(pools) else tb.d
        terms.append(tb.log_rates[nxt, v.pool])
        terms.append(-tb.lam[v.pool] * v.sojourn)
    if any(t == -math.inf for t in terms):
        return -math.inf
    return math.fsum(terms)


def _simulate_block(tb: _Tables, n: int, rng: np.random.Generator, max_jumps: int):
    d = tb.d
    state = (rng.random(n)[:, None] >= tb.beta_cum[None, :]).sum(axis=1)
    logf = tb.log_beta[state].copy()
    transit = np.zeros(n)
    occ = np.zeros((n, d))
    visits = np.zeros(n, dtype=np.int64)
    exit_pool = np.full(n, -1, dtype=np.int64)
    idx = np.arange(n)
    steps = 0
    while idx.size:
        if steps >= max_jumps:
            raise MaxJumpsExceeded(f"a path exceeded {max_jumps} jumps")
        cur = state[idx]
        u_time = rng.random(idx.size)
        u_jump = rng.random(idx.size)
        lam = tb.lam[cur]
        t = -np.log1p(-u_time) / lam
        transit[idx] += t
        occ[idx, cur] += t
        nxt = (u_jump[:, None] >= tb.jump_cum[:, cur].T).sum(axis=1)
        logf[idx] += tb.log_rates[nxt, cur] - lam * t
        visits[idx] += 1
        done = nxt == d
        exit_pool[idx[done]] = cur[done]
        state[idx] = nxt
        idx = idx[~done]
        steps += 1
    return visits + 1, transit, exit_pool, logf, occ


def simulate_paths(sys: CompartmentalSystem, n_paths: int, seed: int, workers: int = 1,
                   max_jumps: int = DEFAULT_MAX_JUMPS, block_size: int = BLOCK_SIZE) -> PathTable:
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    tb = _Tables(sys)
    root = np.random.SeedSequence(seed)
    sizes = [min(block_size, n_paths - s) for s in range(0, n_paths, block_size)]

    def run(k):
        ss = np.random.SeedSequence(root.entropy, spawn_key=(k,))
        return _simulate_block(tb, sizes[k], np.random.Generator(np.random.PCG64(ss)), max_jumps)

    if workers == 1 or len(sizes) == 1:
        parts = [run(k) for k in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    cols = [np.concatenate(c) for c in zip(*parts)]
    return PathTable(*cols)


def _mean_se(a: np.ndarray) -> Estimate:
    n = a.shape[0]
    mean = float(np.mean(a))
    se = float(np.std(a, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, se)


def estimate(sys: CompartmentalSystem, n_paths: int, seed: int, workers: int = 1,
             max_jumps: int = DEFAULT_MAX_JUMPS, table: PathTable | None = None) -> MonteCarloEstimates:
    """Monte Carlo estimates of transit, jumps, occupations, exit pool and entropy.

    The entropy estimate is the sample mean of ``-log f(path)``.
    """
    if table is None:
        table = simulate_paths(sys, n_paths, seed, workers, max_jumps)
    n = table.n_jumps.shape[0]
    counts = np.bincount(table.exit_pool, minlength=sys.d).astype(float)
    freq = counts / n
    exit_est = tuple(Estimate(float(p), float(math.sqrt(p * (1 - p) / n))) for p in freq)
    return MonteCarloEstimates(
        n_paths=n,
        seed=seed,
        mean_transit=_mean_se(table.transit_time),
        mean_jumps=_mean_se(table.n_jumps.astype(float)),
        mean_occupation=tuple(_mean_se(table.occupation[:, j]) for j in range(sys.d)),
        exit_distribution=exit_est,
        entropy=_mean_se(-table.log_density),
    )
