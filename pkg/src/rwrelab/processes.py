"""Auxiliary diffusions: Xi/Z, squared Bessel processes, Bessel passage times,
the positive-excursion stable functional, Kotani's stationary process and the
scale function attached to it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate, special

from . import rng as rngmod
from .potential import PotentialPath, WindowError

EULER = "euler-full-truncation"
EXACT = "exact"
RICCATI = "riccati-exact"


@dataclass(frozen=True)
class SdeConfig:
    """Step and budget settings shared by the integrators.

    ``max_time`` bounds simulated passage and stopping times; a sample that
    needs more is reported as censored (``inf``). ``adaptive`` lets passage
    simulations take exact large steps while far from their target.
    """

    dt: float = 1e-3
    scheme: str = EULER
    seed: int = 0
    max_time: float = math.inf
    adaptive: bool = True
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True, eq=False)
class ProcessPath:
    times: np.ndarray
    values: np.ndarray
    scheme: str
    seed: int
    flags: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def to_csv(self, path) -> None:
        np.savetxt(
            path,
            np.column_stack([self.times, self.values]),
            delimiter=",",
            header="t,value",
            comments="",
            fmt="%.17g",
        )


@dataclass(frozen=True)
class BatchSummary:
    n: int
    mean: float
    se: float
    seed: int

    @classmethod
    def of(cls, samples: np.ndarray, seed: int) -> "BatchSummary":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
        return cls(n, float(samples.mean()), se, seed)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "mean": self.mean, "se": self.se, "seed": self.seed})


def _steps(T: float, dt: float) -> tuple[int, float]:
    """Number of steps covering ``[0, T]`` and the matching uniform step."""
    n = max(1, int(round(T / dt)))
    return n, T / n


# --------------------------------------------------------------------------
# Xi and Z = exp(Xi) - 1


@numba.njit(nogil=True, cache=True)
def _xi_kernel(kappa, dt, nsteps, gen, out):
    sq = math.sqrt(dt)
    x = 0.0
    z_prev = 0.0
    integral = 0.0
    keep = out.size > 0
    if keep:
        out[0] = 0.0
    for i in range(nsteps):
        xp = x if x > 0.0 else 0.0
        e = math.exp(-xp)
        x += math.sqrt(1.0 - e) * sq * gen.standard_normal() + (-0.5 * kappa + 0.5 * (1.0 + kappa) * e) * dt
        xp = x if x > 0.0 else 0.0
        z = math.expm1(xp)
        integral += 0.5 * (z_prev + z) * dt
        z_prev = z
        if keep:
            out[i + 1] = xp
    return (x if x > 0.0 else 0.0), integral


def integrate_xi(kappa: float, T: float, cfg: SdeConfig, replicate: int = 0) -> ProcessPath:
    """Full-truncation Euler path of Xi on ``[0, T]`` started at 0."""
    if kappa < 0 or not T > 0:
        raise ValueError("need kappa >= 0 and T > 0")
    n, dt = _steps(T, cfg.dt)
    out = np.empty(n + 1)
    _xi_kernel(kappa, dt, n, rngmod.stream(cfg.seed, "xi", replicate), out)
    return ProcessPath(np.linspace(0.0, T, n + 1), out, EULER, cfg.seed)


def xi_summary(kappa: float, T: float, cfg: SdeConfig, n: int) -> np.ndarray:
    """Per replicate ``(Xi_T, int_0^T Z)`` without storing paths; shape ``(n, 2)``."""
    if kappa < 0 or not T > 0:
        raise ValueError("need kappa >= 0 and T > 0")
    steps, dt = _steps(T, cfg.dt)
    empty = np.empty(0)

    def one(i):
        return _xi_kernel(kappa, dt, steps, rngmod.stream(cfg.seed, "xi", i), empty)

    return rngmod.replicate_array(one, n, cfg.workers).reshape(n, 2)


def z_mean(kappa: float, t):
    """E[Z_t] from the linear ODE ``m' = (1-kappa) m / 2 + 1/2``, ``m(0) = 0``."""
    a = 0.5 * (1.0 - kappa)
    t = np.asarray(t, dtype=float)
    return 0.5 * t if a == 0 else np.expm1(a * t) / (1.0 - kappa)


def z_mean_integral(kappa: float, t):
    """``int_0^t E[Z_s] ds``."""
    a = 0.5 * (1.0 - kappa)
    t = np.asarray(t, dtype=float)
    if a == 0:
        return 0.25 * t**2
    return (np.expm1(a * t) / a - t) / (1.0 - kappa)


def z_speed_measure(kappa: float, z):
    """Speed-measure density ``2 (1+z)^(-1-kappa)`` of Z (total mass ``2/kappa``)."""
    return 2.0 * (1.0 + np.asarray(z, dtype=float)) ** (-1.0 - kappa)


def z_stationary_density(kappa: float, z):
    """Normalised stationary density ``kappa (1+z)^(-1-kappa)`` of Z."""
    return kappa * (1.0 + np.asarray(z, dtype=float)) ** (-1.0 - kappa)


# --------------------------------------------------------------------------
# squared Bessel processes


@numba.njit(nogil=True, cache=True)
def besq_exact_step(x, delta, h, gen):
    """Exact BESQ(delta) transition over time ``h`` (Poisson mixture of gammas)."""
    if x <= 0.0 and delta <= 0.0:
        return 0.0
    lam = 0.5 * x / h
    if lam > 1e12:
        y = x + delta * h + 2.0 * math.sqrt(x * h) * gen.standard_normal()
        return y if y > 0.0 else 0.0
    k = gen.poisson(lam) if lam > 0.0 else 0
    shape = k + 0.5 * delta
    if shape <= 0.0:
        return 0.0
    return 2.0 * h * gen.gamma(shape, 1.0)


@numba.njit(nogil=True, cache=True)
def _besq_kernel(delta, x0, dt, nsteps, exact, alpha, gen, out):
    sq = math.sqrt(dt)
    x = x0
    out[0] = x0
    for i in range(nsteps):
        if exact:
            x = besq_exact_step(x, delta, dt, gen)
        else:
            xp = x if x > 0.0 else 0.0
            drift = delta
            if alpha > 0.0:
                drift -= 2.0 * xp / (alpha - i * dt)
            x += 2.0 * math.sqrt(xp) * sq * gen.standard_normal() + drift * dt
        out[i + 1] = x if x > 0.0 else 0.0


def simulate_besq(
    delta: float,
    x0: float,
    T: float,
    cfg: SdeConfig,
    bridge_to_zero_at: float | None = None,
    replicate: int = 0,
) -> ProcessPath:
    """Squared Bessel path ``dX = 2 sqrt(X) dbeta + delta dt`` on ``[0, T]``.

    ``cfg.scheme`` selects full-truncation Euler (default) or exact
    transitions. With ``bridge_to_zero_at = alpha`` the drift
    ``-2 X / (alpha - s)`` pins the path to 0 at ``alpha``; the grid then
    stops one step short of ``alpha``.
    """
    if delta < 0 or x0 < 0:
        raise ValueError("delta and x0 must be non-negative")
    alpha = -1.0
    if bridge_to_zero_at is not None:
        alpha = float(bridge_to_zero_at)
        if not alpha > 0:
            raise ValueError("bridge end must be positive")
        if cfg.scheme != EULER:
            raise ValueError("the bridge is only available with the Euler scheme")
        T = min(T, alpha - cfg.dt)
        n = max(1, int(math.floor(T / cfg.dt + 1e-9)))
        dt = cfg.dt
    else:
        n, dt = _steps(T, cfg.dt)
    out = np.empty(n + 1)
    gen = rngmod.stream(cfg.seed, "besq", replicate)
    _besq_kernel(delta, x0, dt, n, cfg.scheme == EXACT, alpha, gen, out)
    times = np.arange(n + 1) * dt
    return ProcessPath(times, out, cfg.scheme, cfg.seed)


# --------------------------------------------------------------------------
# Bessel passage times


@numba.njit(nogil=True, cache=True)
def _bessel_passage_kernel(delta, x_from, y_to, dt, cap, adaptive, gen):
    """Downward passage time of a Bessel(delta) process from ``x_from`` to ``y_to``.

    Away from the target the exact BESQ transition is used with a step whose
    standard deviation is a sixth of the remaining gap; within a few
    ``sqrt(dt)`` of the target, full-truncation Euler steps of size ``dt``
    with linear interpolation of the crossing.
    """
    if x_from <= y_to:
        return 0.0
    x = x_from * x_from
    y2 = y_to * y_to
    sq = math.sqrt(dt)
    t = 0.0
    while t < cap:
        r = math.sqrt(x) if x > 0.0 else 0.0
        gap = r - y_to
        h = (gap / 6.0) ** 2
        if adaptive and delta > 0.0 and h > dt:
            xn = besq_exact_step(x, delta, h, gen)
            step = h
        else:
            xp = x if x > 0.0 else 0.0
            xn = x + 2.0 * math.sqrt(xp) * sq * gen.standard_normal() + delta * dt
            step = dt
        if xn <= y2:
            rn = math.sqrt(xn) if xn > 0.0 else 0.0
            frac = (r - y_to) / (r - rn) if r > rn else 1.0
            return t + frac * step
        x = xn
        t += step
    return math.inf


def bessel_first_passage(
    dim: float, x_from: float, y_to: float, cfg: SdeConfig, n: int = 1
) -> np.ndarray:
    """``n`` samples of the passage time of a Bessel(dim) process from ``x_from`` down to ``y_to``.

    Samples exceeding ``cfg.max_time`` are returned as ``inf``.
    """
    if not x_from >= y_to >= 0:
        raise ValueError("need x_from >= y_to >= 0")
    if dim >= 2 and y_to < x_from:
        raise ValueError("dimension >= 2: downward passage may never happen")
    adaptive = cfg.adaptive

    def one(i):
        gen = rngmod.stream(cfg.seed, "bessel", i)
        return _bessel_passage_kernel(dim, x_from, y_to, cfg.dt, cfg.max_time, adaptive, gen)

    return rngmod.replicate_array(one, n, cfg.workers)


def sample_upsilon_exact(kappa: float, seed: int, n: int = 1) -> np.ndarray:
    """Exact passage time of Bessel(2-2 kappa) from 1 to 0: ``1 / (2 G)``, ``G ~ Gamma(kappa)``."""
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    gen = rngmod.stream(seed, "upsilon-exact")
    return 0.5 / gen.gamma(kappa, 1.0, size=n)


def upsilon_cdf(kappa: float, t):
    """CDF of the exact passage law: ``P(1/(2G) <= t) = P(G >= 1/(2t))``."""
    t = np.asarray(t, dtype=float)
    return special.gammaincc(kappa, 0.5 / np.maximum(t, 1e-300))


# --------------------------------------------------------------------------
# Statement-3 style representation of the occupation times


def theta_from_xi(kappa: float, v: float, cfg: SdeConfig, n: int = 1) -> np.ndarray:
    """Samples of ``(4 int_0^v Z, 16 Upsilon(exp(Xi_v / 2) -> 1))``; shape ``(n, 2)``.

    The Bessel dimension is ``2 - 2 kappa``; for ``kappa >= 1`` the passage is
    still finite (the process is pulled to 0) and Euler steps are used.
    """
    if not kappa > 0 or not v > 0:
        raise ValueError("need kappa > 0 and v > 0")
    steps, dt = _steps(v, cfg.dt)
    dim = 2.0 - 2.0 * kappa
    empty = np.empty(0)
    cap = cfg.max_time / 16.0

    def one(i):
        xi_v, zint = _xi_kernel(kappa, dt, steps, rngmod.stream(cfg.seed, "xi", i), empty)
        gen = rngmod.stream(cfg.seed, "theta2", i)
        up = _bessel_passage_kernel(dim, math.exp(0.5 * xi_v), 1.0, cfg.dt, cap, cfg.adaptive, gen)
        return 4.0 * zint, 16.0 * up

    return rngmod.replicate_array(one, n, cfg.workers).reshape(n, 2)


# --------------------------------------------------------------------------
# stable functional of the positive excursions


@numba.njit(nogil=True, cache=True)
def _linear_power_integral(r0, r1, p, ds):
    """Integral over a step of length ``ds`` of ``rho**p`` for rho linear from r0 to r1."""
    if p == 0.0:
        return ds
    d = r1 - r0
    if abs(d) < 1e-14 * (r0 + r1 + 1e-300):
        return ds * r0**p
    return ds * (r1 ** (p + 1.0) - r0 ** (p + 1.0)) / ((p + 1.0) * d)


@numba.njit(nogil=True, cache=True)
def _stable_kernel(p, level, ds, cap, gen):
    """Positive-excursion functional up to inverse local time, via reflection.

    The positive excursions of a Brownian motion, glued together, form the
    reflected process ``beta - min beta``; its regulator ``-min beta`` is half
    the local time at 0. The running minimum is sampled exactly from the
    Brownian-bridge minimum law inside each step.
    """
    sq = math.sqrt(ds)
    b = 0.0
    m = 0.0
    u = 0.0
    while True:
        bn = b + sq * gen.standard_normal()
        lo = 0.5 * (b + bn - math.sqrt((bn - b) ** 2 - 2.0 * ds * math.log(gen.random())))
        if lo <= -level:
            return u + 0.5 * _linear_power_integral(b - m, bn - min(m, lo), p, ds)
        mn = m if m < lo else lo
        u += _linear_power_integral(b - m, bn - mn, p, ds)
        b = bn
        m = mn
        if u > cap:
            return math.inf


def stable_functional(
    kappa: float, s: float, cfg: SdeConfig, n: int = 1, tag: str = "stable"
) -> np.ndarray:
    """Samples of ``U_s = int_0^{tau_s} gamma^(1/kappa - 2) 1{gamma > 0} du``.

    ``tau_s`` is the inverse local time at 0 of the driving Brownian motion
    ``gamma``. Samples larger than ``cfg.max_time`` are returned as ``inf``.
    """
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    if s < 0:
        raise ValueError("s must be non-negative")
    if s == 0:
        return np.zeros(n)
    p = 1.0 / kappa - 2.0

    def one(i):
        return _stable_kernel(p, 0.5 * s, cfg.dt, cfg.max_time, rngmod.stream(cfg.seed, tag, i))

    return rngmod.replicate_array(one, n, cfg.workers)


def stable_constant(kappa: float) -> float:
    """``c_kappa`` with ``E exp(-lambda U_s / 2) = exp(-s c_kappa lambda^kappa)``."""
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    return math.pi / (2 * kappa * math.sin(math.pi * kappa)) * (kappa**kappa / math.gamma(kappa)) ** 2


# --------------------------------------------------------------------------
# Kotani's stationary process


def kotani_fixed_point(lam: float, kappa: float, scheme: str = RICCATI) -> float:
    """Zero-noise equilibrium used to start the burn-in.

    Euler integrates the Ito form, whose zero-noise drift is
    ``1 + (1-kappa) U / 2 - 2 lam U^2``. The cell-exact scheme integrates
    ``U' = 1 + W' U - 2 lam U^2`` along the sampled potential, whose flat
    version (slope ``-kappa/2``) has drift ``1 - kappa U / 2 - 2 lam U^2``.
    """
    b = 0.5 * (1.0 - kappa) if scheme == EULER else -0.5 * kappa
    return (b + math.sqrt(b * b + 8.0 * lam)) / (4.0 * lam)


@numba.njit(nogil=True, cache=True)
def _kotani_euler(u0, lam, kappa, w, dx, floor, out):
    u = u0
    out[0] = u
    for k in range(w.size - 1):
        dwb = w[k + 1] - w[k] + 0.5 * kappa * dx
        u += u * dwb + (1.0 + 0.5 * (1.0 - kappa) * u - 2.0 * lam * u * u) * dx
        if u < floor:
            u = floor
        out[k + 1] = u


@numba.njit(nogil=True, cache=True)
def _kotani_riccati(u0, lam, w, dx, out):
    u = u0
    out[0] = u
    c = 2.0 * lam
    for k in range(w.size - 1):
        s = (w[k + 1] - w[k]) / dx
        d = math.sqrt(s * s + 4.0 * c)
        rp = (s + d) / (2.0 * c)
        rm = (s - d) / (2.0 * c)
        q = (u - rp) / (u - rm) * math.exp(-d * dx)
        u = (rp - rm * q) / (1.0 - q)
        out[k + 1] = u


def kotani_u(
    lam: float,
    kappa: float,
    env: PotentialPath,
    cfg: SdeConfig | None = None,
    *,
    t_end: float,
    burn: float | None = None,
    scheme: str | None = None,
    floor: float = 1e-12,
    noise: bool = True,
) -> ProcessPath:
    """Stationary solution of Kotani's equation on ``[0, t_end]`` driven by ``env``.

    The equation is integrated from ``-burn`` (default ``20 / lam``) starting at
    the zero-noise fixed point; the burn-in part is discarded. The driving
    increments are those of the potential itself. ``noise=False`` replaces the
    potential by its pure drift (test hook). ``scheme`` defaults to
    ``cfg.scheme`` when a config is given and to the cell-exact Riccati
    solution otherwise.
    """
    if scheme is None:
        scheme = cfg.scheme if cfg is not None else RICCATI
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if burn is None:
        burn = 20.0 / lam
    if env.x_min > -burn + 1e-9 or env.x_max < t_end - 1e-9:
        side = "left" if env.x_min > -burn + 1e-9 else "right"
        raise WindowError(f"environment must cover [{-burn}, {t_end}]", side)
    i0 = env.nearest_index(-burn)
    i1 = env.nearest_index(t_end)
    w = env.values[i0 : i1 + 1]
    if not noise:
        w = -0.5 * kappa * env.x[i0 : i1 + 1]
    out = np.empty(w.size)
    u0 = kotani_fixed_point(lam, kappa, scheme)
    if scheme == EULER:
        _kotani_euler(u0, lam, kappa, w, env.dx, floor, out)
    elif scheme == RICCATI:
        _kotani_riccati(u0, lam, w, env.dx, out)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    keep = env.origin - i0
    times = env.x[i0 + keep : i1 + 1]
    return ProcessPath(times, out[keep:], scheme, env.seed if env.seed is not None else -1)


def kotani_laplace(path: ProcessPath, lam: float, v: float) -> float:
    """``exp(-2 lam int_0^v U)`` from a retained Kotani path (trapezoid rule)."""
    k = int(round(v / path.dt))
    if k >= path.times.size:
        raise WindowError("Kotani path shorter than v", "right")
    return math.exp(-2.0 * lam * np.trapezoid(path.values[: k + 1], dx=path.dt))


# --------------------------------------------------------------------------
# scale function g of Kotani's process and the associated integral


def _g_integrand(s, kappa, lam):
    return math.exp(2.0 / s + 4.0 * lam * s) * s ** (kappa - 1.0)


def kotani_scale_g(kappa: float, lam: float, x: float) -> float:
    """``g(x) = int_1^x exp(2/s + 4 lam s) s^(kappa-1) ds`` by adaptive quadrature."""
    if not x > 0:
        raise ValueError("x must be positive")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if x == 1.0:
        return 0.0
    lo, hi = (1.0, x) if x > 1 else (x, 1.0)
    with np.errstate(over="ignore"):
        val, _ = integrate.quad(_g_integrand, lo, hi, args=(kappa, lam), epsabs=0.0, epsrel=1e-13, limit=500)
    return val if x > 1 else -val


def kotani_scale_g_inverse(kappa: float, lam: float, y: float, tol: float = 1e-10) -> float:
    """Monotone bisection for ``g^{-1}(y)`` to absolute tolerance ``tol`` in x."""
    lo, hi = 1.0, 1.0
    if y > 0:
        while kotani_scale_g(kappa, lam, hi) < y:
            lo, hi = hi, 2.0 * hi
    elif y < 0:
        while kotani_scale_g(kappa, lam, lo) > y:
            hi, lo = lo, 0.5 * lo
    else:
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if kotani_scale_g(kappa, lam, mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _equ_grid(kappa: float, lam: float, y_lo: float = 1e-2, n_lo: int = 1500, n_hi: int = 6000):
    """y-grids below and above 1 for the lemma integral and their g-increments."""
    y_max = max(4.0, 40.0 / (4.0 * lam))
    below = np.geomspace(1.0, y_lo, n_lo)  # descending from 1
    above = 1.0 + np.geomspace(1e-3, y_max, n_hi)
    above = np.concatenate(([1.0], above))
    nodes, weights = np.polynomial.legendre.leggauss(8)

    def g_increments(y):
        a, b = y[:-1], y[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        s = mid[:, None] + half[:, None] * nodes[None, :]
        with np.errstate(over="ignore"):
            f = np.exp(2.0 / s + 4.0 * lam * s) * s ** (kappa - 1.0)
        return np.abs(half) * (f @ weights)

    return below, g_increments(below), above, g_increments(above)


@numba.njit(nogil=True, cache=True)
def _field_integral(r, y, dg, weight, gen):
    """Trapezoid of ``weight(y) * L(y)`` with L a BESQ(0) field from ``r`` in level ``g(y)``."""
    total = 0.0
    l_prev = r
    for j in range(dg.size):
        l_new = besq_exact_step(l_prev, 0.0, dg[j], gen)
        total += 0.5 * (weight[j] * l_prev + weight[j + 1] * l_new) * abs(y[j + 1] - y[j])
        l_prev = l_new
        if l_prev <= 0.0:
            break
    return total


def lemma_equ_weight(nu: float, kappa: float, lam: float, y):
    """``y^(nu+kappa-1) exp(-2/y - 4 lam y)``: the integrand in the y variable."""
    y = np.asarray(y, dtype=float)
    return y ** (nu + kappa - 1.0) * np.exp(-2.0 / y - 4.0 * lam * y)


def lemma_equ_mean(nu: float, kappa: float, lam: float) -> float:
    """``E D_nu(r) / r = int_0^inf y^(nu+kappa-1) exp(-2/y - 4 lam y) dy`` (Bessel-K form)."""
    a = nu + kappa
    return 2.0 * (2.0 / (4.0 * lam)) ** (a / 2.0) * special.kv(a, 2.0 * math.sqrt(8.0 * lam))


def lemma_equ_integral(
    nu: float, kappa: float, lam: float, r: float, cfg: SdeConfig, n: int = 1
) -> np.ndarray:
    """Samples of ``int_0^{tau_r} F(gamma_s) ds`` with ``F(y) = G^nu exp(-4/G - 8 lam G)``, ``G = g^{-1}(y)``.

    By the occupation formula the integral equals ``int F(y) L^y_{tau_r} dy``;
    the local-time field at inverse local time is a pair of independent
    BESQ(0) processes started at ``r`` (above and below level 0). Changing
    variables ``y = g(G)`` removes ``g^{-1}``, so the fields are sampled exactly
    at the levels ``g(G_j)`` of a fixed G-grid.
    """
    if not (r >= 0 and lam > 0):
        raise ValueError("need r >= 0 and lambda > 0")
    if r == 0:
        return np.zeros(n)
    below, dg_below, above, dg_above = _equ_grid(kappa, lam)
    w_below = lemma_equ_weight(nu, kappa, lam, below)
    w_above = lemma_equ_weight(nu, kappa, lam, above)

    def one(i):
        gen = rngmod.stream(cfg.seed, "lemma-equ", i)
        return _field_integral(r, above, dg_above, w_above, gen) + _field_integral(
            r, below, dg_below, w_below, gen
        )

    return rngmod.replicate_array(one, n, cfg.workers)
