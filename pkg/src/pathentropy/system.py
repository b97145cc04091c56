"""Linear autonomous compartmental systems in equilibrium.

A system ``dx/dt = B x + u`` is described by its input vector ``u`` and its
compartmental matrix ``B``.  Off-diagonal ``B[i, j]`` is the flux rate from
pool ``j`` to pool ``i``; ``z[j] = -sum_i B[i, j]`` is the rate at which pool
``j`` releases material to the environment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import InvalidSystemError, NegativeSteadyStateError, SingularMatrixError

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class Violation:
    code: str
    location: tuple
    magnitude: float

    def __str__(self):
        loc = ",".join(str(i + 1) for i in self.location)
        return f"{self.code}[{loc}] magnitude={self.magnitude:.6g}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


def _as_matrix(B) -> np.ndarray:
    B = np.array(B, dtype=float)
    if B.ndim == 0:
        B = B.reshape(1, 1)
    return B


def validate(B, u, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check every compartmental-system invariant and report all violations.

    Never raises; malformed shapes are reported as ``SHAPE`` violations.
    Sign checks are relative to the largest magnitude in ``B`` (resp. ``u``).
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    B = _as_matrix(B)
    u = np.atleast_1d(np.array(u, dtype=float))
    out = []

    if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] < 1:
        return ValidationReport((Violation("SHAPE", (), float("nan")),))
    d = B.shape[0]
    if u.shape != (d,):
        return ValidationReport((Violation("SHAPE", (), float(u.size)),))
    if not (np.all(np.isfinite(B)) and np.all(np.isfinite(u))):
        return ValidationReport((Violation("NONFINITE", (), float("nan")),))

    b_tol = tol * max(1.0, float(np.abs(B).max()))
    for i in range(d):
        for j in range(d):
            if i == j:
                if B[i, j] > b_tol:
                    out.append(Violation("SIGN_DIAGONAL", (i, j), float(B[i, j])))
            elif B[i, j] < -b_tol:
                out.append(Violation("SIGN_OFFDIAGONAL", (i, j), float(-B[i, j])))
    for j in range(d):
        colsum = math.fsum(B[:, j])
        if colsum > b_tol:
            out.append(Violation("COLUMN_SUM", (j,), colsum))

    u_tol = tol * max(1.0, float(np.abs(u).max()))
    for i in range(d):
        if u[i] < -u_tol:
            out.append(Violation("SIGN_INPUT", (i,), float(-u[i])))
    if math.fsum(np.abs(u)) <= 0.0:
        out.append(Violation("ZERO_INPUT", (), 0.0))

    s = np.linalg.svd(B, compute_uv=False)
    rank_tol = max(tol, d * np.finfo(float).eps) * s[0]
    if s[0] == 0.0 or s[-1] <= rank_tol:
        out.append(Violation("SINGULAR", (), float(s[-1])))

    return ValidationReport(tuple(out))


def output_rates(B, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Return ``z`` with ``z[j] = -sum_i B[i, j]``; values below tolerance become 0."""
    B = _as_matrix(B)
    z = np.array([-math.fsum(B[:, j]) for j in range(B.shape[1])])
    scale = np.maximum(1.0, np.abs(np.diag(B)))
    z[np.abs(z) < tol * scale] = 0.0
    return z


@dataclass(frozen=True, eq=False)
class CompartmentalSystem:
    """An open compartmental system ``M(u, B)``; validated on construction."""

    u: np.ndarray
    B: np.ndarray
    label: Optional[str] = None
    tol: float = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        B = _as_matrix(self.B)
        u = np.atleast_1d(np.array(self.u, dtype=float))
        report = validate(B, u, self.tol)
        if not report.is_valid:
            raise InvalidSystemError(report)
        # negative zeros and within-tolerance negatives are cleaned here
        u = np.where(u < 0, 0.0, u)
        B.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "u", u)

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @cached_property
    def z(self) -> np.ndarray:
        z = output_rates(self.B, self.tol)
        z.setflags(write=False)
        return z

    @cached_property
    def lam(self) -> np.ndarray:
        """Total exit rates ``-B[j, j]``."""
        lam = -np.diag(self.B).copy()
        lam[lam < 0] = 0.0
        lam.setflags(write=False)
        return lam

    @property
    def input_total(self) -> float:
        return math.fsum(self.u)

    def scaled(self, xi: float, label: Optional[str] = None) -> "CompartmentalSystem":
        """The same structure run ``xi`` times faster."""
        return CompartmentalSystem(self.u, xi * self.B, label or self.label, self.tol)

    def __eq__(self, other):
        if not isinstance(other, CompartmentalSystem):
            return NotImplemented
        return np.array_equal(self.u, other.u) and np.array_equal(self.B, other.B)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SteadyState:
    x_star: np.ndarray
    release_flux: np.ndarray


def steady_state(sys: CompartmentalSystem) -> SteadyState:
    """Solve ``B x = -u`` by LU with partial pivoting; ``r = z * x``."""
    cached = sys.__dict__.get("_steady_state")
    if cached is not None:
        return cached
    try:
        x = np.linalg.solve(sys.B, -sys.u)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("steady state is not finite")
    scale = max(1.0, float(np.abs(x).max()))
    if np.any(x < -sys.tol * scale):
        raise NegativeSteadyStateError(f"negative steady-state component: {x}")
    x = np.where(x < 0, 0.0, x)
    r = sys.z * x
    x.setflags(write=False)
    r.setflags(write=False)
    ss = SteadyState(x, r)
    sys.__dict__["_steady_state"] = ss
    return ss
