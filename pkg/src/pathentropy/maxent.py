"""Maximum-entropy model selection for compartmental systems.

Two closed-form constructions (fixed mean transit time; fixed steady state)
and the numerical selection of a two-pool model from impulse-response data
that leave the compartmental matrix non-identifiable.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .chain import mean_transit_time
from .entropy import entropy_rate_per_jump, entropy_rate_per_time, path_entropy
from .errors import EmptyFeasibleSetError, NonpositiveTargetError
from .system import CompartmentalSystem, steady_state

OBJECTIVES = ("path_entropy", "rate_per_time", "rate_per_jump")

# --- closed forms -----------------------------------------------------------


@dataclass(frozen=True)
class TransitConstraintProblem:
    d: int
    u: tuple
    mean_transit: float

    def __post_init__(self):
        u = tuple(float(v) for v in self.u)
        object.__setattr__(self, "u", u)
        if self.d < 1 or len(u) != self.d:
            raise ValueError("u must have length d >= 1")
        if any(v < 0 for v in u) or sum(u) <= 0:
            raise ValueError("u must be nonnegative and nonzero")
        if not self.mean_transit > 0:
            raise NonpositiveTargetError("mean transit time must be positive")


@dataclass(frozen=True)
class SteadyStateConstraintProblem:
    """Target stocks ``xstar``; ``u`` defaults to the input the closed form implies."""

    xstar: tuple
    u: Optional[tuple] = None

    def __post_init__(self):
        x = tuple(float(v) for v in self.xstar)
        object.__setattr__(self, "xstar", x)
        if not x or any(not v > 0 for v in x):
            raise NonpositiveTargetError(f"steady-state targets must be positive, got {x}")
        if self.u is not None:
            u = tuple(float(v) for v in self.u)
            if len(u) != len(x) or any(v < 0 for v in u) or sum(u) <= 0:
                raise ValueError("u must be a nonnegative nonzero vector matching xstar")
            object.__setattr__(self, "u", u)


def maxent_fixed_transit(problem: TransitConstraintProblem) -> CompartmentalSystem:
    """All internal rates 1, all exit rates ``1/E[T]``."""
    d = problem.d
    z = 1.0 / problem.mean_transit
    B = np.ones((d, d))
    np.fill_diagonal(B, -((d - 1) + z))
    return CompartmentalSystem(np.array(problem.u), B, label=f"maxent(d={d}, T={problem.mean_transit:g})")


def implied_input(xstar) -> np.ndarray:
    """Input under which the closed-form steady-state model has stocks ``xstar``."""
    return np.sqrt(np.asarray(xstar, dtype=float))


def maxent_fixed_steady_state(problem: SteadyStateConstraintProblem) -> CompartmentalSystem:
    """``B_ij = sqrt(x_i/x_j)`` and ``z_j = 1/sqrt(x_j)``.

    This stationary point is only consistent with the input ``sqrt(xstar)``;
    the returned system is driven by that input.  A differing ``problem.u``
    triggers a warning; use :func:`maxent_steady_state_dual` to honour it.
    """
    x = np.array(problem.xstar)
    r = np.sqrt(x)
    B = r[:, None] / r[None, :]
    np.fill_diagonal(B, 0.0)
    np.fill_diagonal(B, -(B.sum(axis=0) + 1.0 / r))
    u = implied_input(x)
    if problem.u is not None and not np.allclose(problem.u, u, rtol=1e-9, atol=0):
        warnings.warn(f"closed form requires u = sqrt(xstar) = {u.tolist()}; "
                      f"given u = {list(problem.u)} was replaced")
    return CompartmentalSystem(u, B, label="maxent-steady-state")


def _dual_pieces(g, x):
    v = np.exp(g)
    Bm = v[:, None] / v[None, :]
    np.fill_diagonal(Bm, 0.0)
    z = 1.0 / v
    return Bm, z


def maxent_steady_state_dual(xstar, u) -> CompartmentalSystem:
    """Maximum-entropy model with prescribed stocks and an arbitrary input.

    Solves the convex dual ``min_g sum_j x_j (sum_{i!=j} e^{g_i-g_j} + e^{-g_j}) + g.u``;
    the primal optimum is ``B_ij = e^{g_i-g_j}``, ``z_j = e^{-g_j}``.
    """
    x = np.asarray(xstar, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(x <= 0):
        raise NonpositiveTargetError("steady-state targets must be positive")
    d = len(x)

    def fun(g):
        Bm, z = _dual_pieces(g, x)
        val = float((Bm * x[None, :]).sum() + (z * x).sum() + g @ u)
        grad = Bm @ x - x * Bm.sum(axis=0) - x * z + u
        return val, grad

    def hess(g):
        Bm, z = _dual_pieces(g, x)
        W = Bm * x[None, :]  # W[m, j] = x_j e^{g_m - g_j}
        S = W + W.T
        Hm = -S
        np.fill_diagonal(Hm, S.sum(axis=1) + x * z)
        return Hm

    g0 = 0.5 * np.log(x)
    res = optimize.minimize(fun, g0, jac=True, hess=hess, method="trust-exact",
                            options={"gtol": 1e-12, "maxiter": 500})
    g = res.x
    tol = 1e-10 * max(1.0, float(np.abs(u).sum()))
    # Newton polish; the trust-region stop criterion is looser than needed
    for _ in range(50):
        _, grad = fun(g)
        if np.abs(grad).max() <= tol:
            break
        g = g - np.linalg.solve(hess(g), grad)
    _, grad = fun(g)
    if not np.abs(grad).max() <= tol:
        raise EmptyFeasibleSetError(f"dual did not converge: residual {np.abs(grad).max():.3g}")
    Bm, z = _dual_pieces(g, x)
    B = Bm.copy()
    np.fill_diagonal(B, -(Bm.sum(axis=0) + z))
    return CompartmentalSystem(u, B, label="maxent-steady-state")


def entropy_at_fixed_stocks(B_off, z, u, xstar) -> float:
    """Path entropy as a function of rates with the stocks held fixed.

    ``B_off`` is a ``d x d`` array whose diagonal is ignored.
    """
    B_off = np.asarray(B_off, dtype=float)
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    x = np.asarray(xstar, dtype=float)
    total = u.sum()
    beta = u / total
    hb = -sum(b * math.log(b) for b in beta if b > 0)
    d = len(x)
    acc = [hb]
    for j in range(d):
        rates = [B_off[i, j] for i in range(d) if i != j] + [z[j]]
        acc.append(x[j] / total * sum(_f(r) for r in rates))
    return math.fsum(acc)


def _f(r: float) -> float:
    return 0.0 if r <= 0 else r * (1.0 - math.log(r))


def random_transit_competitor(d: int, u, mean_transit: float, rng: np.random.Generator) -> CompartmentalSystem:
    """Random member of the fixed-mean-transit class with positive rates.

    Scaling ``B`` by ``s`` scales the mean transit time by ``1/s``, so a single
    rescale hits the target exactly.
    """
    B = rng.uniform(0.05, 2.0, size=(d, d))
    z = rng.uniform(0.05, 2.0, size=d)
    np.fill_diagonal(B, 0.0)
    np.fill_diagonal(B, -(B.sum(axis=0) + z))
    base = CompartmentalSystem(np.asarray(u, float), B)
    return base.scaled(mean_transit_time(base) / mean_transit)


def random_steady_competitor(u, xstar, rng: np.random.Generator, spread: float = 3.0,
                             max_tries: int = 10_000) -> CompartmentalSystem:
    """Random member with the given input and stocks (rejection on ``z >= 0``)."""
    u = np.asarray(u, float)
    x = np.asarray(xstar, float)
    d = len(x)
    scale = spread * max(1.0, float(np.sqrt(x.max() / x.min())))
    for _ in range(max_tries):
        Bo = rng.uniform(0.0, scale, size=(d, d))
        np.fill_diagonal(Bo, 0.0)
        # pool i balance: inflow sum_j B_ij x_j + u_i = x_i (sum_k B_ki + z_i)
        z = (Bo @ x + u) / x - Bo.sum(axis=0)
        if np.all(z > 0):
            B = Bo.copy()
            np.fill_diagonal(B, -(Bo.sum(axis=0) + z))
            return CompartmentalSystem(u, B)
    raise RuntimeError("could not draw a feasible competitor")


# --- objective dispatch ---------------------------------------------------------


def objective(sys: CompartmentalSystem, which: str = "rate_per_time") -> float:
    which = which.replace("-", "_")
    if which == "path_entropy":
        return path_entropy(sys)
    if which == "rate_per_time":
        return entropy_rate_per_time(sys)
    if which == "rate_per_jump":
        return entropy_rate_per_jump(sys)
    raise ValueError(f"unknown objective {which!r}; choose from {OBJECTIVES}")


# --- two-pool identification ------------------------------------------------------


@dataclass(frozen=True)
class GammaConstraints:
    """Transfer-function coefficients of ``(s + g1) / (s^2 + g2 s + g3)``.

    With ``p = (B12, B21, z1, z2)``: ``g1 = B12 + z2``,
    ``g2 = B21 + z1 + B12 + z2``, ``g3 = z1 B12 + z1 z2 + B21 z2``.
    """

    gamma1: float
    gamma2: float
    gamma3: float

    @property
    def product(self) -> float:
        """Value forced on ``B21 * B12``."""
        return (self.gamma2 - self.gamma1) * self.gamma1 - self.gamma3

    def residuals(self, p) -> np.ndarray:
        b12, b21, z1, z2 = p
        return np.array([
            b12 + z2 - self.gamma1,
            b21 + z1 + b12 + z2 - self.gamma2,
            z1 * b12 + z1 * z2 + b21 * z2 - self.gamma3,
        ])


def params_to_matrix(p) -> np.ndarray:
    b12, b21, z1, z2 = p
    return np.array([[-(b21 + z1), b12], [b21, -(b12 + z2)]])


@dataclass(frozen=True)
class Segment:
    """One-parameter piece of the feasible set.

    ``kind`` is ``"b12"`` (parameter ``B12``, ``B21 = product / B12``),
    ``"b21_zero"`` (parameter ``B12`` with ``B21 = 0``) or ``"b12_zero"``
    (parameter ``B21`` with ``B12 = 0``).
    """

    kind: str
    lo: float
    hi: float
    gamma: GammaConstraints

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def params(self, t):
        t = np.asarray(t, dtype=float)
        g = self.gamma
        a = g.gamma2 - g.gamma1
        if self.kind == "b12":
            b12 = t
            b21 = g.product / t
        elif self.kind == "b21_zero":
            b12 = t
            b21 = np.zeros_like(t)
        else:
            b12 = np.zeros_like(t)
            b21 = t
        z1 = a - b21
        z2 = g.gamma1 - b12
        return np.stack([b12, b21, np.maximum(z1, 0.0), np.maximum(z2, 0.0)], axis=-1)


@dataclass(frozen=True)
class FeasibleSet:
    gamma: GammaConstraints
    segments: tuple

    @property
    def b12_interval(self) -> tuple[float, float]:
        vals = []
        for s in self.segments:
            if s.kind == "b12_zero":
                vals.append(0.0)
            else:
                vals += [s.lo, s.hi]
        return (min(vals), max(vals))

    @property
    def is_degenerate(self) -> bool:
        return all(s.width == 0.0 for s in self.segments)


def _preimage(lo_val, hi_val, c):
    """``t > 0`` with ``c / t`` in ``[lo_val, hi_val]`` for ``c > 0``."""
    t_lo = 0.0 if hi_val == math.inf else (math.inf if hi_val <= 0 else c / hi_val)
    t_hi = math.inf if lo_val <= 0 else c / lo_val
    return t_lo, t_hi


def feasible_interval(constraints: GammaConstraints, bounds=None) -> FeasibleSet:
    """Eliminate ``z2 = g1 - B12``, ``z1 = g2 - g1 - B21`` and ``B21 B12 = product``.

    ``bounds`` is a box ``[(lo, hi)] * 4`` on ``(B12, B21, z1, z2)`` (default:
    the nonnegative orthant).  Raises :class:`EmptyFeasibleSetError` when no
    valid open compartmental matrix satisfies the constraints.
    """
    g = constraints
    box = [(0.0, math.inf)] * 4 if bounds is None else [(max(0.0, float(l)), float(h)) for l, h in bounds]
    if len(box) != 4 or any(l > h for l, h in box):
        raise ValueError("bounds must be four (lo, hi) pairs with lo <= hi")
    a = g.gamma2 - g.gamma1
    c = g.product
    # det B equals gamma3, so gamma3 <= 0 can never give an open system
    if g.gamma3 <= 0 or c < 0 or a < 0 or g.gamma1 < 0:
        raise EmptyFeasibleSetError(
            f"no compartmental matrix satisfies gamma = ({g.gamma1:g}, {g.gamma2:g}, {g.gamma3:g}); "
            f"B21*B12 would equal {c:g}")
    (b12l, b12h), (b21l, b21h), (z1l, z1h), (z2l, z2h) = box
    segs = []
    if c > 0:
        lo, hi = max(b12l, g.gamma1 - z2h), min(b12h, g.gamma1 - z2l)
        t1 = _preimage(b21l, b21h, c)
        t2 = _preimage(a - z1h, a - z1l, c)
        lo, hi = max(lo, t1[0], t2[0]), min(hi, t1[1], t2[1])
        lo = max(lo, 0.0)
        if lo <= hi and hi > 0 and lo > 0:
            segs.append(Segment("b12", lo, hi, g))
        elif lo <= hi and hi > 0:
            segs.append(Segment("b12", max(lo, np.nextafter(0.0, 1.0)), hi, g))
    else:
        # B21 = 0: t = B12, z1 = a, z2 = g1 - t
        if b21l <= 0 and z1l <= a <= z1h:
            lo, hi = max(b12l, g.gamma1 - z2h, 0.0), min(b12h, g.gamma1 - z2l)
            if lo <= hi:
                segs.append(Segment("b21_zero", lo, hi, g))
        # B12 = 0: t = B21, z1 = a - t, z2 = g1
        if b12l <= 0 and z2l <= g.gamma1 <= z2h:
            lo, hi = max(b21l, a - z1h, 0.0), min(b21h, a - z1l)
            if lo <= hi:
                segs.append(Segment("b12_zero", lo, hi, g))
    if not segs:
        raise EmptyFeasibleSetError("constraints admit no parameters inside the bounds")
    return FeasibleSet(g, tuple(segs))


def family_values(p, u=(1.0, 0.0)):
    """Vectorised ``(H, E[T], E[N])`` for two-pool systems with parameters ``p``.

    ``p`` has shape ``(..., 4)`` holding ``(B12, B21, z1, z2)``.
    """
    p = np.asarray(p, dtype=float)
    b12, b21, z1, z2 = np.moveaxis(p, -1, 0)
    u1, u2 = float(u[0]), float(u[1])
    total = u1 + u2
    b11 = -(b21 + z1)
    b22 = -(b12 + z2)
    det = b11 * b22 - b12 * b21
    x1 = -(b22 * u1 - b12 * u2) / det
    x2 = -(-b21 * u1 + b11 * u2) / det
    hb = -sum(b / total * math.log(b / total) for b in (u1, u2) if b > 0)

    def f(r):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, r * (1.0 - np.log(np.where(r > 0, r, 1.0))), 0.0)

    H = hb + (x1 * (f(b21) + f(z1)) + x2 * (f(b12) + f(z2))) / total
    ET = (x1 + x2) / total
    EN = (-b11 * x1 - b22 * x2) / total + 1.0
    return H, ET, EN


def family_objective(p, which: str = "rate_per_time", u=(1.0, 0.0)):
    H, ET, EN = family_values(p, u)
    which = which.replace("-", "_")
    if which == "path_entropy":
        return H
    if which == "rate_per_time":
        return H / ET
    if which == "rate_per_jump":
        return H / EN
    raise ValueError(f"unknown objective {which!r}")


@dataclass(frozen=True)
class LocalMaximum:
    params: tuple
    theta: float
    H: float
    mean_transit: float
    value: float
    start_point: tuple
    n_starts: int


@dataclass(frozen=True, eq=False)
class StartTable:
    """One row per grid start that was kept."""

    starts: np.ndarray
    params: np.ndarray
    value: np.ndarray
    theta: np.ndarray
    H: np.ndarray
    mean_transit: np.ndarray
    converged: np.ndarray


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    constraints: GammaConstraints
    objective: str
    feasible: FeasibleSet
    best_params: tuple
    best_system: CompartmentalSystem
    best_value: float
    best_rate: float
    scan_params: tuple
    scan_value: float
    local_maxima: tuple
    n_starts: int = 0
    n_feasible: int = 0
    n_converged: int = 0
    starts: Optional[StartTable] = field(default=None, repr=False)


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_lockstep(f, a, b, tol):
    """Vectorised golden-section maximisation on brackets ``[a, b]``."""
    a = a.copy()
    b = b.copy()
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(200):
        if np.all(b - a <= tol * np.maximum(1.0, np.abs(a))):
            break
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLD * (b - a)
        new_d = a + _GOLD * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, np.nan, fd)
        fd_next = np.where(left, fc, np.nan)
        need_c = left
        need_d = ~left
        if need_c.any():
            fc_next[need_c] = f(c_next[need_c], need_c)
        if need_d.any():
            fd_next[need_d] = f(d_next[need_d], need_d)
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    t = np.where(fc >= fd, c, d)
    converged = b - a <= tol * np.maximum(1.0, np.abs(a)) * 1.0000001
    return t, converged


def local_ascent(f, t0, lo, hi, step=None, tol=1e-10):
    """Derivative-free uphill bracketing then golden section, for many starts at once.

    ``f(t, mask)`` evaluates the objective for the entries selected by
    ``mask`` (``mask`` is ``None`` for all entries).  ``lo``/``hi`` bound the
    parameter.  Returns ``(t_max, converged)``.
    """
    t0 = np.asarray(t0, dtype=float)
    n = t0.shape[0]
    lo = np.broadcast_to(np.asarray(lo, float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, float), (n,)).copy()
    if step is None:
        step = 1e-3 * np.maximum(hi - lo, 1e-12)
    h = np.broadcast_to(np.asarray(step, float), (n,)).copy()

    def F(t, mask=None):
        return f(t, mask)

    f0 = F(t0)
    right = np.minimum(t0 + h, hi)
    left = np.maximum(t0 - h, lo)
    fr, fl = F(right), F(left)
    go_right = (fr > f0) & (fr >= fl)
    go_left = (fl > f0) & ~go_right
    stay = ~(go_right | go_left)

    # a: trailing point, b: best so far, c: probe; bracket found once f(c) < f(b)
    a = t0.copy()
    b = np.where(go_right, right, np.where(go_left, left, t0))
    fb = np.where(go_right, fr, np.where(go_left, fl, f0))
    lo_br = np.where(stay, left, 0.0)
    hi_br = np.where(stay, right, 0.0)
    direction = np.where(go_right, 1.0, -1.0)
    active = ~stay
    span = h.copy()
    while active.any():
        idx = np.flatnonzero(active)
        span[idx] *= 2.0
        probe = np.clip(b[idx] + direction[idx] * span[idx], lo[idx], hi[idx])
        mask = np.zeros(n, dtype=bool)
        mask[idx] = True
        fp = F(probe, mask)
        up = (fp > fb[idx]) & (probe != b[idx])
        at_wall = probe == b[idx]
        # keep climbing
        ui = idx[up]
        a[ui] = b[ui]
        b[ui] = probe[up]
        fb[ui] = fp[up]
        # bracket closed: between trailing point and probe
        done = ~up
        di = idx[done]
        ends = np.where(at_wall[done], b[di], probe[done])
        lo_br[di] = np.minimum(a[di], ends)
        hi_br[di] = np.maximum(a[di], ends)
        active[di] = False
    return _golden_lockstep(F, lo_br, hi_br, tol)


def _eliminate(starts, fs: FeasibleSet):
    """Map 4-D starts to a segment index and parameter by elimination.

    A start keeps its ``B12`` coordinate (or ``B21`` on the ``B12 = 0``
    branch); starts whose coordinate falls outside the feasible range are
    dropped.
    """
    seg_idx = np.full(len(starts), -1)
    t0 = np.full(len(starts), np.nan)
    for k, s in enumerate(fs.segments):
        if s.kind == "b12_zero":
            coord = starts[:, 1]
            sel = (starts[:, 0] == 0.0) & (coord >= s.lo) & (coord <= s.hi)
        else:
            coord = starts[:, 0]
            sel = (coord >= s.lo) & (coord <= s.hi)
            if s.kind == "b21_zero" and any(o.kind == "b12_zero" for o in fs.segments):
                sel &= coord > 0.0
        sel &= seg_idx < 0
        seg_idx[sel] = k
        t0[sel] = coord[sel]
    return seg_idx, t0


def _nearest(starts, fs: FeasibleSet, n_coarse: int = 2001):
    """Euclidean projection of 4-D starts onto the feasible curve."""
    best_d = np.full(len(starts), np.inf)
    seg_idx = np.full(len(starts), -1)
    t0 = np.full(len(starts), np.nan)
    for k, s in enumerate(fs.segments):
        ts = np.linspace(s.lo, s.hi, n_coarse if s.width > 0 else 1)
        C = s.params(ts)
        cn = (C * C).sum(axis=1)
        for lo_i in range(0, len(starts), 8192):
            P = starts[lo_i:lo_i + 8192]
            D = (P * P).sum(axis=1)[:, None] - 2.0 * P @ C.T + cn[None, :]
            j = D.argmin(axis=1)
            dmin = D[np.arange(len(P)), j]
            better = dmin < best_d[lo_i:lo_i + 8192]
            sl = np.arange(lo_i, lo_i + len(P))[better]
            best_d[sl] = dmin[better]
            seg_idx[sl] = k
            t0[sl] = ts[j[better]]
    # golden refinement of the distance within one coarse cell
    for k, s in enumerate(fs.segments):
        sel = np.flatnonzero(seg_idx == k)
        if not sel.size or s.width == 0:
            continue
        cell = s.width / (n_coarse - 1)
        a = np.maximum(t0[sel] - cell, s.lo)
        b = np.minimum(t0[sel] + cell, s.hi)
        P = starts[sel]

        def neg_dist(t, mask=None, P=P, s=s):
            Q = P if mask is None else P[mask]
            return -((s.params(t) - Q) ** 2).sum(axis=1)

        t, _ = _golden_lockstep(neg_dist, a, b, 1e-12)
        t0[sel] = t
    return seg_idx, t0


def grid_starts(mesh: float = 0.2, bounds=((0.0, 5.0),) * 4) -> np.ndarray:
    axes = []
    for lo, hi in bounds:
        n = int(math.floor((hi - lo) / mesh + 1e-9)) + 1
        axes.append(np.round(lo + mesh * np.arange(n), 12))
    mesh_pts = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh_pts], axis=1)


def scan(fs: FeasibleSet, which: str = "rate_per_time", u=(1.0, 0.0), n_points: int = 20001):
    """Dense one-parameter scan of the feasible set, polished by golden section.

    Returns ``(params, value)`` of the best point; ties go to the smaller ``B12``.
    """
    best_val, best_p = -math.inf, None
    for s in fs.segments:
        ts = np.linspace(s.lo, s.hi, n_points if s.width > 0 else 1)
        vals = family_objective(s.params(ts), which, u)
        k = int(np.argmax(vals))
        t_k = ts[k]
        if s.width > 0:
            a = ts[max(k - 1, 0)]
            b = ts[min(k + 1, len(ts) - 1)]
            t_ref, _ = _golden_lockstep(
                lambda t, mask=None: family_objective(s.params(t), which, u),
                np.array([a]), np.array([b]), 1e-12)
            if family_objective(s.params(t_ref[0]), which, u) >= vals[k]:
                t_k = t_ref[0]
        p = s.params(t_k)
        v = float(family_objective(p, which, u))
        if v > best_val + 1e-15 or (abs(v - best_val) <= 1e-15 and p[0] < best_p[0]):
            best_val, best_p = v, p
    return tuple(float(c) for c in best_p), best_val


def identify(constraints: GammaConstraints, u=(1.0, 0.0), grid_mesh: float = 0.2,
             bounds=((0.0, 5.0),) * 4, objective: str = "rate_per_time",
             projection: str = "eliminate", scan_points: int = 20001,
             workers: int = 1, tol: float = 1e-10) -> IdentificationResult:
    """Select the two-pool model with maximal entropy among all that fit the data.

    Every grid start in ``bounds`` is projected onto the constraint manifold
    (``projection="eliminate"`` keeps its ``B12`` coordinate,
    ``"nearest"`` takes the Euclidean nearest point) and climbed by a local
    derivative-free ascent.  A dense scan of the manifold runs alongside as a
    brute-force check.
    """
    which = objective.replace("-", "_")
    if which not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if not grid_mesh > 0:
        raise ValueError("grid_mesh must be positive")
    u = tuple(float(v) for v in u)
    bounds = [tuple(map(float, b)) for b in bounds]
    if len(bounds) == 1:
        bounds = bounds * 4
    fs = feasible_interval(constraints, bounds)
    scan_p, scan_v = scan(fs, which, u, scan_points)

    def finish(best_p, best_v, maxima, n_starts=0, n_feasible=0, n_conv=0, table=None):
        sys = CompartmentalSystem(np.array(u), params_to_matrix(best_p), label="identified")
        return IdentificationResult(
            constraints=constraints, objective=which, feasible=fs,
            best_params=tuple(float(c) for c in best_p), best_system=sys,
            best_value=float(best_v), best_rate=float(entropy_rate_per_time(sys)),
            scan_params=scan_p, scan_value=scan_v, local_maxima=tuple(maxima),
            n_starts=n_starts, n_feasible=n_feasible, n_converged=n_conv, starts=table)

    if fs.is_degenerate:
        p = fs.segments[0].params(fs.segments[0].lo)
        H, ET, _ = family_values(p, u)
        v = float(family_objective(p, which, u))
        lm = LocalMaximum(tuple(map(float, p)), float(H / ET), float(H), float(ET), v, (), 0)
        return finish(p, v, [lm])

    starts = grid_starts(grid_mesh, bounds)
    project = _eliminate if projection == "eliminate" else _nearest
    chunks = np.array_split(np.arange(len(starts)), max(1, workers))

    def run(ix):
        seg_idx, t0 = project(starts[ix], fs)
        t_out = np.full(len(ix), np.nan)
        conv = np.zeros(len(ix), dtype=bool)
        for k, s in enumerate(fs.segments):
            sel = np.flatnonzero(seg_idx == k)
            if not sel.size:
                continue
            if s.width == 0:
                t_out[sel] = s.lo
                conv[sel] = True
                continue
            # distinct starting parameters share one ascent
            uniq, inv = np.unique(t0[sel], return_inverse=True)

            def f(t, mask=None, s=s):
                return family_objective(s.params(t), which, u)

            t_max, ok = local_ascent(f, uniq, s.lo, s.hi, tol=tol)
            t_out[sel] = t_max[inv]
            conv[sel] = ok[inv]
        return seg_idx, t_out, conv

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(ix) for ix in chunks]
    seg_idx = np.concatenate([p[0] for p in parts])
    t_out = np.concatenate([p[1] for p in parts])
    conv = np.concatenate([p[2] for p in parts])

    keep = seg_idx >= 0
    if not keep.any():
        raise EmptyFeasibleSetError("no grid start projects onto the feasible set")
    params = np.full((len(starts), 4), np.nan)
    for k, s in enumerate(fs.segments):
        sel = seg_idx == k
        if sel.any():
            params[sel] = s.params(t_out[sel])
    kp = params[keep]
    H, ET, _ = family_values(kp, u)
    vals = family_objective(kp, which, u)
    table = StartTable(starts=starts[keep], params=kp, value=vals, theta=H / ET, H=H,
                       mean_transit=ET, converged=conv[keep])

    # distinct local maxima, keyed by rounded parameters
    key = np.round(kp, 6)
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    maxima = []
    for i, cnt in zip(first, counts):
        maxima.append(LocalMaximum(tuple(map(float, kp[i])), float(H[i] / ET[i]), float(H[i]),
                                   float(ET[i]), float(vals[i]), tuple(map(float, table.starts[i])),
                                   int(cnt)))
    maxima.sort(key=lambda m: (-m.value, m.params[0]))
    best = maxima[0]
    return finish(best.params, best.value, maxima, len(starts), int(keep.sum()),
                  int(conv[keep].sum()), table)


def local_maximize_4d(constraints: GammaConstraints, start, u=(1.0, 0.0),
                      objective: str = "rate_per_time", bounds=((0.0, 5.0),) * 4):
    """Local maximisation in the full 4-D parameter space with equality constraints.

    Uses SLSQP directly on ``(B12, B21, z1, z2)``; an alternative to the
    manifold ascent in :func:`identify`.  Returns ``(params, value, success)``.
    """
    g = constraints
    which = objective.replace("-", "_")

    def neg(p):
        with np.errstate(all="ignore"):
            v = family_objective(np.maximum(p, 0.0), which, u)
        return -float(v) if np.isfinite(v) else 1e6

    cons = [{"type": "eq", "fun": lambda p, k=k: g.residuals(p)[k]} for k in range(3)]
    res = optimize.minimize(neg, np.asarray(start, float), method="SLSQP", constraints=cons,
                            bounds=bounds, options={"ftol": 1e-14, "maxiter": 500})
    p = np.maximum(res.x, 0.0)
    ok = bool(res.success) and np.all(np.abs(g.residuals(p)) < 1e-7)
    return tuple(map(float, p)), -float(res.fun), ok
