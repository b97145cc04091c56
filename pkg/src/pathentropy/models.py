"""Named example systems and parameter sweeps.

Includes the seven small reference structures, the five-pool global carbon
cycle model of Emanuel (1981) with a rate modifier ``xi``, and the two-pool
microbial soil model of Wang et al. (2014) linearised at its equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .entropy import entropy_report
from .errors import InvalidEfficiencyError, PathEntropyError
from .system import CompartmentalSystem, steady_state

# PgC / yr
EMANUEL_INPUT = (77, 0, 36, 0, 0)
# per yr, stored exactly; B[i][j] is the rate from pool j to pool i
_EMANUEL_B = [
    ["-77/37", "0", "0", "0", "0"],
    ["31/37", "-31/452", "0", "0", "0"],
    ["0", "0", "-36/69", "0", "0"],
    ["21/37", "15/452", "12/69", "-48/81", "0"],
    ["0", "2/452", "6/69", "3/81", "-11/1121"],
]
EMANUEL_B0 = tuple(tuple(Fraction(v) for v in row) for row in _EMANUEL_B)
EMANUEL_POOLS = ("non-woody tree parts", "woody tree parts", "ground vegetation",
                 "detritus/decomposers", "active soil carbon")


def emanuel(xi: float = 1.0) -> CompartmentalSystem:
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    B = np.array([[float(v) for v in row] for row in EMANUEL_B0])
    return CompartmentalSystem(np.array(EMANUEL_INPUT, dtype=float), xi * B,
                               label=f"emanuel(xi={xi:g})")


@dataclass(frozen=True)
class WangParameters:
    """Soil microbial model parameters (gC m^-2, yr^-1)."""

    epsilon: float = 0.39
    mu_b: float = 4.38
    F_NPP: float = 345.0
    K_s: float = 53954.83
    V_s: float = 59.13

    def check(self):
        for name in ("mu_b", "F_NPP", "K_s", "V_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.epsilon < 1:
            raise InvalidEfficiencyError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.V_s * self.epsilon / self.mu_b > 1:
            raise InvalidEfficiencyError(
                f"V_s*epsilon/mu_b = {self.V_s * self.epsilon / self.mu_b:.6g} <= 1: "
                "no positive substrate equilibrium")

    def equilibrium(self) -> tuple[float, float]:
        """Equilibrium substrate and microbial carbon ``(C_s*, C_b*)``."""
        self.check()
        cs = self.K_s / (self.V_s * self.epsilon / self.mu_b - 1.0)
        cb = self.F_NPP / (self.mu_b * (1.0 / self.epsilon - 1.0))
        return cs, cb

    def uptake_rate(self, cs: float, cb: float) -> float:
        return cb * self.V_s / (cs + self.K_s)


def wang(params: Optional[WangParameters] = None, **overrides) -> CompartmentalSystem:
    """Wang model frozen at equilibrium; microbial pool has no direct outflow."""
    p = params or WangParameters()
    if overrides:
        p = WangParameters(**{**p.__dict__, **overrides})
    cs, cb = p.equilibrium()
    lam = p.uptake_rate(cs, cb)
    B = np.array([[-lam, p.mu_b], [p.epsilon * lam, -p.mu_b]])
    return CompartmentalSystem(np.array([p.F_NPP, 0.0]), B, label=f"wang(epsilon={p.epsilon:g})")


TABLE1_NAMES = (
    "one-pool",
    "serial two-pool",
    "parallel two-pool",
    "feedback two-pool",
    "coupled two-pool",
    "serial three-pool",
    "parallel three-pool",
)

# reference values to two decimals: theta_J, E[N], theta, E[T], H; row 1 at lambda = 1
TABLE1_PRINTED = (
    (0.5, 2.00, 1.0, 1.0, 1.0),
    (0.67, 3.00, 1.00, 2.00, 2.00),
    (0.85, 2.00, 1.69, 1.00, 1.69),
    (1.08, 5.00, 1.35, 4.00, 5.39),
    (1.36, 3.00, 2.04, 2.00, 4.08),
    (0.75, 4.00, 1.00, 3.00, 3.00),
    (1.05, 2.00, 2.10, 1.00, 2.10),
)


def one_pool(lam: float = 1.0, u: float = 1.0) -> CompartmentalSystem:
    return CompartmentalSystem([u], [[-lam]], label=f"one-pool(lambda={lam:g})")


def table1_systems(lam: float = 1.0) -> list[CompartmentalSystem]:
    specs = [
        ([1.0], [[-lam]]),
        ([1, 0], [[-1, 0], [1, -1]]),
        ([1, 1], [[-1, 0], [0, -1]]),
        ([1, 0], [[-1, 0.5], [1, -1]]),
        ([1, 1], [[-1, 0.5], [0.5, -1]]),
        ([1, 0, 0], [[-1, 0, 0], [1, -1, 0], [0, 1, -1]]),
        ([1, 1, 1], [[-1, 0, 0], [0, -1, 0], [0, 0, -1]]),
    ]
    return [CompartmentalSystem(u, B, label=name) for (u, B), name in zip(specs, TABLE1_NAMES)]


@dataclass(frozen=True)
class SweepRow:
    param: float
    stocks: tuple
    mean_transit: float
    expected_jumps: float
    H: float
    H_beta: float
    H_jump: float
    H_sojourn: float
    theta: float
    theta_J: float
    op_H: float
    op_theta: float
    op_theta_J: float
    rate_11: float = math.nan

    CSV_FIELDS = ("ET", "EN", "H", "H_beta", "H_jump", "H_sojourn", "theta", "thetaJ",
                  "op_H", "op_theta", "op_thetaJ")

    def values(self) -> tuple:
        return (self.mean_transit, self.expected_jumps, self.H, self.H_beta, self.H_jump,
                self.H_sojourn, self.theta, self.theta_J, self.op_H, self.op_theta,
                self.op_theta_J)


@dataclass(frozen=True)
class SweepFailure:
    param: float
    error: str


FAMILIES: dict[str, Callable[[float], CompartmentalSystem]] = {
    "emanuel": emanuel,
    "wang": lambda eps: wang(epsilon=eps),
}


def sweep_row(param: float, sys: CompartmentalSystem) -> SweepRow:
    rep = entropy_report(sys)
    return SweepRow(
        param=float(param),
        stocks=tuple(float(v) for v in steady_state(sys).x_star),
        mean_transit=rep.mean_transit,
        expected_jumps=rep.expected_jumps,
        H=rep.path_entropy,
        H_beta=rep.entry_entropy,
        H_jump=rep.jump_entropy,
        H_sojourn=rep.sojourn_entropy,
        theta=rep.rate_per_time,
        theta_J=rep.rate_per_jump,
        op_H=rep.one_pool.H,
        op_theta=rep.one_pool.theta,
        op_theta_J=rep.one_pool.theta_J,
        rate_11=float(-sys.B[0, 0]),
    )


def sweep(family, values: Sequence[float], workers: int = 1):
    """Evaluate one row per parameter value; failures are collected, not raised.

    ``family`` is ``"emanuel"``, ``"wang"`` or any callable mapping a value to a
    system.  Returns ``(rows, failures)`` in input order.
    """
    build = FAMILIES[family] if isinstance(family, str) else family

    def one(v):
        try:
            return sweep_row(v, build(float(v)))
        except (PathEntropyError, ValueError, ArithmeticError) as exc:
            return SweepFailure(float(v), f"{type(exc).__name__}: {exc}")

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, values))
    else:
        results = [one(v) for v in values]
    rows = [r for r in results if isinstance(r, SweepRow)]
    failures = [r for r in results if isinstance(r, SweepFailure)]
    return rows, failures


def default_grid(family: str) -> np.ndarray:
    if family == "emanuel":
        return np.round(np.arange(0.5, 10.0 + 1e-9, 0.01), 10)
    if family == "wang":
        return np.round(np.arange(0.08, 0.995 + 1e-9, 0.0005), 10)
    raise KeyError(family)


# --- curve features -------------------------------------------------------


def first_crossing(params, a, b, refine: Optional[Callable[[float], float]] = None,
                   tol: float = 1e-3) -> Optional[float]:
    """Parameter where ``a - b`` first changes sign on the grid.

    With ``refine`` (a function of the parameter returning ``a - b``) the
    bracket is refined by Brent's method, else by linear interpolation.
    """
    params = np.asarray(params, float)
    diff = np.asarray(a, float) - np.asarray(b, float)
    for k in range(len(diff) - 1):
        if diff[k] == 0.0:
            return float(params[k])
        if diff[k] * diff[k + 1] < 0:
            lo, hi = params[k], params[k + 1]
            if refine is not None:
                return float(brentq(refine, lo, hi, xtol=tol * 1e-3))
            w = diff[k] / (diff[k] - diff[k + 1])
            return float(lo + w * (hi - lo))
    if len(diff) and diff[-1] == 0.0:
        return float(params[-1])
    return None


def grid_argmax(params, values, refine: Optional[Callable[[float], float]] = None,
                tol: float = 1e-3) -> Optional[float]:
    """Location of the maximum on the grid, refined by golden section if possible."""
    params = np.asarray(params, float)
    values = np.asarray(values, float)
    if len(params) < 3:
        return None
    k = int(np.argmax(values))
    if k == 0 or k == len(params) - 1:
        return float(params[k])
    if refine is None:
        # vertex of the parabola through the three grid points
        x0, x1, x2 = params[k - 1:k + 2]
        y0, y1, y2 = values[k - 1:k + 2]
        den = (x0 - x1) * (x0 - x2) * (x1 - x2)
        A = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
        Bc = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den
        return float(-Bc / (2 * A)) if A < 0 else float(params[k])
    res = minimize_scalar(lambda p: -refine(p), bracket=(params[k - 1], params[k], params[k + 1]),
                          method="golden", tol=tol * 1e-3)
    return float(res.x)


def _emanuel_gap(xi: float) -> float:
    rep = entropy_report(emanuel(xi))
    return rep.path_entropy - rep.one_pool.H


def _emanuel_theta(xi: float) -> float:
    return entropy_report(emanuel(xi)).rate_per_time


def features(family: str, rows: Sequence[SweepRow], **wang_overrides) -> dict[str, float]:
    """Curve features: break-even with the one-pool model, theta peak, unit rate.

    ``wang_overrides`` must match the parameters the Wang rows were built with.
    """
    if len(rows) < 2:
        return {}
    p = [r.param for r in rows]
    out = {}
    if family == "emanuel":
        xi = first_crossing(p, [r.H for r in rows], [r.op_H for r in rows], refine=_emanuel_gap)
        if xi is not None:
            out["break_even_xi"] = xi
        peak = grid_argmax(p, [r.theta for r in rows], refine=_emanuel_theta)
        if peak is not None:
            out["theta_peak_xi"] = peak
    elif family == "wang":
        def rate_gap(eps):
            return -wang(epsilon=eps, **wang_overrides).B[0, 0] - 1.0

        def theta(eps):
            return entropy_report(wang(epsilon=eps, **wang_overrides)).rate_per_time

        eps = first_crossing(p, [r.rate_11 for r in rows], [1.0] * len(rows), refine=rate_gap)
        if eps is not None:
            out["unit_rate_epsilon"] = eps
        peak = grid_argmax(p, [r.theta for r in rows], refine=theta)
        if peak is not None:
            out["theta_peak_epsilon"] = peak
    else:
        xi = first_crossing(p, [r.H for r in rows], [r.op_H for r in rows])
        if xi is not None:
            out["break_even"] = xi
        peak = grid_argmax(p, [r.theta for r in rows])
        if peak is not None:
            out["theta_peak"] = peak
    return out
