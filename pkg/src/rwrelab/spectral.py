"""Principal value of ``z'' = -lam V z`` and the exit-time moment bound.

``principal_lambda`` is the supremum of ``lam`` for which the solution with
``z(0) = 1, z'(0) = 0`` stays positive on ``[0, L)``. It is found by RK4
shooting and bisection. The Hardy-type bracket
``S <= 1/lam <= 4 S`` with ``S = sup_t (L - t) Vbar(t)`` both seeds the
bisection and serves as an independent check.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numba
import numpy as np

from .potential import PotentialPath, interval_depths, scale_table

RK4_STEPS = 10_000


@dataclass(frozen=True, eq=False)
class PotentialWeight:
    """Non-negative weight ``V`` sampled on an increasing grid starting at 0."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape or self.grid.size < 2:
            raise ValueError("grid and values must be matching 1-d arrays")
        if self.grid[0] != 0.0 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must start at 0 and increase")
        if np.any(self.values < 0):
            raise ValueError("V must be non-negative")

    @classmethod
    def from_function(cls, fn, length: float = 1.0, n: int = 10_001) -> "PotentialWeight":
        grid = np.linspace(0.0, length, n)
        return cls(grid, np.asarray(fn(grid), dtype=np.float64) * np.ones(n))

    @classmethod
    def piecewise_constant(cls, levels, length: float = 1.0, per_piece: int = 200) -> "PotentialWeight":
        """Step weight with equal-length pieces, resolved by ``per_piece`` nodes each."""
        levels = np.asarray(levels, dtype=np.float64)
        n = levels.size * per_piece + 1
        grid = np.linspace(0.0, length, n)
        idx = np.minimum((grid / length * levels.size).astype(np.int64), levels.size - 1)
        return cls(grid, levels[idx])

    @property
    def length(self) -> float:
        return float(self.grid[-1])

    @property
    def cumulative(self) -> np.ndarray:
        """``Vbar(t) = int_0^t V`` at the grid points (trapezoid rule)."""
        out = np.zeros_like(self.values)
        out[1:] = np.cumsum(0.5 * np.diff(self.grid) * (self.values[1:] + self.values[:-1]))
        return out

    def scaled(self, c: float) -> "PotentialWeight":
        return PotentialWeight(self.grid, self.values * c)


@numba.njit(cache=True)
def _first_nonpositive(lam, h, v0, vm, v1):
    """RK4 for ``z'' = -lam V z`` from ``(1, 0)``; True if ``z`` reaches ``<= 0``."""
    z = 1.0
    p = 0.0
    for i in range(v0.size):
        k1z = p
        k1p = -lam * v0[i] * z
        k2z = p + 0.5 * h * k1p
        k2p = -lam * vm[i] * (z + 0.5 * h * k1z)
        k3z = p + 0.5 * h * k2p
        k3p = -lam * vm[i] * (z + 0.5 * h * k2z)
        k4z = p + h * k3p
        k4p = -lam * v1[i] * (z + h * k3z)
        z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if z <= 0.0:
            return True
    return False


def _rk4_samples(V: PotentialWeight, steps: int):
    t = np.linspace(0.0, V.length, steps + 1)
    h = t[1] - t[0]
    at = np.interp(t, V.grid, V.values)
    mid = np.interp(t[:-1] + 0.5 * h, V.grid, V.values)
    return h, at[:-1], mid, at[1:]


def bracket_sup(V: PotentialWeight) -> float:
    """``S = sup_{0<t<L} (L - t) Vbar(t)`` over the grid."""
    return float(np.max((V.length - V.grid) * V.cumulative))


def principal_lambda(V: PotentialWeight, *, rtol: float = 1e-8, steps: int = RK4_STEPS) -> float:
    """Largest ``lam`` keeping the shooting solution positive on ``[0, L)``.

    Returns ``math.inf`` when ``V`` vanishes identically.
    """
    S = bracket_sup(V)
    if S <= 0.0:
        return math.inf
    h, v0, vm, v1 = _rk4_samples(V, steps)
    lo, hi = 0.5 / (4.0 * S), 2.0 / S
    while _first_nonpositive(lo, h, v0, vm, v1):
        lo *= 0.5
    while not _first_nonpositive(hi, h, v0, vm, v1):
        hi *= 2.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _first_nonpositive(mid, h, v0, vm, v1):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class BracketCheck:
    S: float
    inverse_lambda: float
    lower_ok: bool
    upper_ok: bool


def bobkov_bracket(V: PotentialWeight, *, slack: float = 1e-9) -> BracketCheck:
    """Check ``S <= 1/lam <= 4 S`` against the shooting value.

    ``slack`` absorbs the relative tolerance of the bisection.
    """
    S = bracket_sup(V)
    lam = principal_lambda(V)
    inv = 0.0 if math.isinf(lam) else 1.0 / lam
    return BracketCheck(
        S=S,
        inverse_lambda=inv,
        lower_ok=S <= inv * (1.0 + slack),
        upper_ok=inv <= 4.0 * S * (1.0 + slack),
    )


@dataclass(frozen=True)
class ExitBound:
    a: float
    c: float
    D_plus: float
    M: float
    lambda_star: float
    bound: float
    lambda_numeric: float
    certified: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def extended_weight(env: PotentialPath, a: float, c: float, n: int = 20_001) -> tuple[PotentialWeight, float]:
    """Speed weight seen from ``a`` on the scale axis, with a flat extension past ``c``.

    The potential is continued by the constant ``W(c)`` up to
    ``c' = a + 2 (c - a)``. The weight is returned on ``[0, 1]`` with
    ``V(s) = exp(-2 W(A^{-1}(A(a) + s L)))``, ``L = A(c') - A(a)``; the
    principal value on the scale axis is ``lam(V) / L**2``.
    """
    table = scale_table(env)
    ia, ic = env.index(a), env.index(c)
    xs = env.x[ia : ic + 1]
    ws = env.values[ia : ic + 1]
    w_c = float(ws[-1])
    A_rel = np.concatenate([[0.0], np.cumsum(table.width[ia:ic])])
    A_c = float(A_rel[-1])
    L = A_c + (c - a) * math.exp(w_c)
    s = np.linspace(0.0, 1.0, n)
    y = s * L
    inside = y <= A_c
    # invert the scale function cell by cell on the retained nodes
    j = np.clip(np.searchsorted(A_rel, y, side="right") - 1, 0, xs.size - 2)
    w_left, w_right = ws[j], ws[j + 1]
    slope = (np.exp(w_right) - np.exp(w_left)) / (table.width[ia + j])
    e = np.exp(w_left) + slope * (y - A_rel[j])
    w_in = np.log(np.maximum(e, 1e-300))
    w = np.where(inside, w_in, w_c)
    return PotentialWeight(s, np.exp(-2.0 * w)), L


def exit_laplace_bound(env: PotentialPath, a: float, c: float) -> ExitBound:
    """Certified exponential moment of the exit time from ``[a, c]``.

    ``lambda_star = 1 / (64 (c - a) exp(D_plus))`` and
    ``E exp(lambda_star * (H(a) ^ H(c))) <= 2 exp(M)``. The principal value
    of the extended weight is computed numerically as well; ``certified``
    reports whether it is at least ``lambda_star``.
    """
    if not env.x_min <= a <= c <= env.x_max:
        raise ValueError("interval outside the environment window")
    if a == c:
        return ExitBound(a, c, 0.0, 0.0, math.inf, 1.0, math.inf, True)
    d_plus, _, _, m = interval_depths(env, a, c)
    lam_star = 1.0 / (64.0 * (c - a) * math.exp(d_plus))
    V, L = extended_weight(env, a, c)
    lam_num = principal_lambda(V) / L**2
    return ExitBound(
        a=a,
        c=c,
        D_plus=float(d_plus),
        M=float(m),
        lambda_star=lam_star,
        bound=2.0 * math.exp(m),
        lambda_numeric=lam_num,
        certified=lam_star <= lam_num,
    )
