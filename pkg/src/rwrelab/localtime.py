"""Brownian local times, inverse local time and Ray-Knight fields.

Empirical local times are occupation densities: time spent in a bin of
width ``h`` divided by ``h``. Bins are centred on multiples of ``h`` so that
level 0 sits in the middle of a bin.

For the Ray-Knight comparisons the empirical fields are built from
Brownian paths with a reflecting barrier placed beyond the levels of
interest. A reflected motion has the law of the original one with its
excursions past the barrier cut out, so the occupation below the barrier
is unchanged in law while the running time stays bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import rng as rngmod
from .processes import SdeConfig, besq_exact_step, simulate_besq


class StopNotReached(RuntimeError):
    """The stopping rule was not realized within the path."""


@dataclass(frozen=True)
class FixedTime:
    t: float


@dataclass(frozen=True)
class Passage:
    level: float


@dataclass(frozen=True)
class InverseLocalTime:
    r: float


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Standard Brownian motion sampled every ``ds`` from 0."""

    values: np.ndarray
    ds: float
    seed: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.ds


def simulate_brownian(T: float, ds: float, seed: int, replicate: int = 0) -> BrownianPath:
    n = int(round(T / ds))
    gen = rngmod.stream(seed, "brownian", replicate)
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(gen.standard_normal(n) * math.sqrt(ds), out=values[1:])
    return BrownianPath(values, ds, seed)


@dataclass(frozen=True, eq=False)
class LocalTimeField:
    """Local time ``L(x)`` on a level grid at one stopping time."""

    levels: np.ndarray
    values: np.ndarray
    bin_width: float
    elapsed: float
    seed: int | None = None

    def at(self, level: float) -> float:
        i = int(round((level - self.levels[0]) / self.bin_width))
        if not 0 <= i < self.levels.size:
            return 0.0
        return float(self.values[i])

    def integral(self) -> float:
        """Occupation identity: this should match ``elapsed``."""
        return float(np.sum(self.values) * self.bin_width)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.levels, self.values]), delimiter=",",
                   header="level,L", comments="", fmt="%.17g")


def _bin_index(x: np.ndarray, h: float) -> np.ndarray:
    return np.floor(x / h + 0.5).astype(np.int64)


def _zero_bin_clock(values: np.ndarray, ds: float, h: float) -> np.ndarray:
    """Running binned local time at 0 after each sample."""
    inside = np.abs(values) < 0.5 * h
    return np.cumsum(inside) * (ds / h)


def inverse_local_time(path: BrownianPath, r: float, bin_width: float = 0.02) -> float:
    """First time the binned local time at 0 exceeds ``r``."""
    if r < 0:
        raise ValueError("r must be non-negative")
    if r == 0:
        return 0.0
    clock = _zero_bin_clock(path.values, path.ds, bin_width)
    idx = int(np.searchsorted(clock, r, side="right"))
    if idx >= clock.size:
        raise StopNotReached(f"local time at 0 stays below {r}")
    return (idx + 1) * path.ds


def _stop_index(path: BrownianPath, stop, bin_width: float) -> int:
    """Number of samples counted before the stopping time."""
    if isinstance(stop, FixedTime):
        n = int(round(stop.t / path.ds))
        if n > path.values.size - 1:
            raise StopNotReached("path shorter than the fixed time")
        return n
    if isinstance(stop, Passage):
        a = stop.level
        hit = np.flatnonzero(path.values >= a) if a >= 0 else np.flatnonzero(path.values <= a)
        if hit.size == 0:
            raise StopNotReached(f"level {a} not reached")
        return int(hit[0])
    if isinstance(stop, InverseLocalTime):
        return int(round(inverse_local_time(path, stop.r, bin_width) / path.ds))
    raise TypeError(f"unknown stopping rule {stop!r}")


def local_time_field(path: BrownianPath, stop, bin_width: float = 0.02) -> LocalTimeField:
    """Binned occupation density of ``path`` up to the stopping time."""
    n = _stop_index(path, stop, bin_width)
    x = path.values[:n]
    if n == 0:
        return LocalTimeField(np.zeros(1), np.zeros(1), bin_width, 0.0, path.seed)
    idx = _bin_index(x, bin_width)
    lo = int(idx.min())
    counts = np.bincount(idx - lo)
    levels = (lo + np.arange(counts.size)) * bin_width
    return LocalTimeField(levels, counts * (path.ds / bin_width), bin_width, n * path.ds, path.seed)


# --------------------------------------------------------------------------
# streaming empirical fields


@numba.njit(nogil=True, cache=True)
def _inverse_local_time_kernel(r, ds, h, t_max, gen):
    sq = math.sqrt(ds)
    half = 0.5 * h
    need = r * h / ds
    b = 0.0
    count = 0.0
    n = 0
    n_max = t_max / ds
    while n < n_max:
        if abs(b) < half:
            count += 1.0
            if count > need:
                return (n + 1) * ds
        b += sq * gen.standard_normal()
        n += 1
    return math.inf


def sample_inverse_local_time(
    r: float, cfg: SdeConfig, n: int, *, bin_width: float = 0.02, t_max: float = math.inf
) -> np.ndarray:
    """Samples of the binned ``tau_r``; ``inf`` where ``t_max`` was hit first."""
    if r <= 0:
        return np.zeros(n)
    cap = min(t_max, cfg.max_time)

    def one(i):
        gen = rngmod.stream(cfg.seed, "inverse-local-time", i)
        return _inverse_local_time_kernel(r, cfg.dt, bin_width, cap, gen)

    return rngmod.replicate_array(one, n, cfg.workers)


@numba.njit(nogil=True, cache=True)
def _first_kind_kernel(a, mirror, ds, h, probes, gen, out):
    """Brownian motion from 0 until it hits ``a``, reflected upward at ``mirror``.

    Adds ``ds / h`` to ``out[j]`` for every sample in the bin centred on
    ``probes[j]``.
    """
    sq = math.sqrt(ds)
    half = 0.5 * h
    b = 0.0
    while b < a:
        for j in range(probes.size):
            if abs(b - probes[j]) < half:
                out[j] += ds / h
        b += sq * gen.standard_normal()
        if b < mirror:
            b = 2.0 * mirror - b


@numba.njit(nogil=True, cache=True)
def _second_kind_kernel(u, mirror, ds, h, probes, gen, out):
    """Positive-side field of Brownian motion stopped at the inverse local time ``u``.

    The positive part of the motion, time-changed, is a reflected motion
    whose regulator equals half the local time at 0; it is run until the
    regulator reaches ``u / 2``. The regulator increment inside a step comes
    from the Brownian-bridge minimum law. Excursions above ``mirror`` are
    folded back, which leaves the law of the field below it unchanged.
    """
    sq = math.sqrt(ds)
    half = 0.5 * h
    target = 0.5 * u
    rho = 0.0
    reg = 0.0
    while True:
        for j in range(probes.size):
            if abs(rho - probes[j]) < half:
                out[j] += ds / h
        d = sq * gen.standard_normal()
        lo = rho + 0.5 * (d - math.sqrt(d * d - 2.0 * ds * math.log(gen.random())))
        if lo < 0.0:
            reg -= lo
            rho = rho + d - lo
            if reg >= target:
                return
        else:
            rho += d
        if rho > mirror:
            rho = 2.0 * mirror - rho


def empirical_rayknight(
    kind: str,
    param: float,
    probes,
    cfg: SdeConfig,
    n: int,
    *,
    bin_width: float = 0.02,
    mirror: float = 1.5,
) -> np.ndarray:
    """Binned local times at ``probes`` for ``n`` Brownian paths; shape ``(n, len(probes))``.

    ``kind="first"``: motion from 0 stopped on hitting ``param`` (> 0), with a
    reflecting barrier at ``-mirror`` below every probe level.
    ``kind="second"``: motion stopped at the inverse local time ``param`` at 0,
    positive probe levels only, barrier at ``+mirror``.
    """
    probes = np.asarray(probes, dtype=np.float64)
    if kind == "first":
        if not param > 0 or np.any(probes <= -mirror):
            raise ValueError("need a > 0 and probes above the barrier")
    elif kind == "second":
        if not param > 0 or np.any(probes <= 0) or np.any(probes >= mirror):
            raise ValueError("need u > 0 and probes inside (0, mirror)")
    else:
        raise ValueError(f"unknown kind {kind!r}")

    def one(i):
        gen = rngmod.stream(cfg.seed, "rayknight-empirical", i)
        out = np.zeros(probes.size)
        if kind == "first":
            _first_kind_kernel(param, -mirror, cfg.dt, bin_width, probes, gen, out)
        else:
            _second_kind_kernel(param, mirror, cfg.dt, bin_width, probes, gen, out)
        return out

    return rngmod.replicate_array(one, n, cfg.workers).reshape(n, probes.size)


# --------------------------------------------------------------------------
# synthetic Ray-Knight fields


def rayknight_field(
    kind: str, param: float, cfg: SdeConfig, *, extent: float | None = None, replicate: int = 0
) -> LocalTimeField:
    """Local-time field generated directly as the prescribed squared Bessel process.

    ``kind="first"``, ``param=a``: the field of a Brownian motion stopped on
    hitting ``a``, read downward from ``a``. It is BESQ(2) from 0 over
    ``[0, a]`` and BESQ(0) afterwards; levels are ``a - s``.
    ``kind="second"``, ``param=u``: the field on the positive levels at the
    inverse local time ``u``, a BESQ(0) process from ``u``.

    ``cfg.dt`` is the level step; ``cfg.scheme`` is passed to the BESQ
    sampler (exact transitions are the natural choice).
    """
    if not param > 0:
        raise ValueError("param must be positive")
    if kind == "first":
        extent = 2.0 * param if extent is None else extent
        upper = simulate_besq(2.0, 0.0, param, cfg, replicate=2 * replicate)
        lower = simulate_besq(0.0, float(upper.values[-1]), extent, cfg, replicate=2 * replicate + 1)
        s = np.concatenate([upper.times, param + lower.times[1:]])
        values = np.concatenate([upper.values, lower.values[1:]])
        levels = param - s
        order = np.argsort(levels)
        return LocalTimeField(levels[order], values[order], upper.dt, math.nan, cfg.seed)
    if kind == "second":
        extent = 4.0 * param if extent is None else extent
        path = simulate_besq(0.0, param, extent, cfg, replicate=2 * replicate)
        return LocalTimeField(path.times, path.values.copy(), path.dt, math.nan, cfg.seed)
    raise ValueError(f"unknown kind {kind!r}")


def synthetic_rayknight(kind: str, param: float, probes, cfg: SdeConfig, n: int, *, level_step: float = 0.01) -> np.ndarray:
    """Values of ``n`` synthetic fields at ``probes``; shape ``(n, len(probes))``."""
    probes = np.asarray(probes, dtype=np.float64)
    step_cfg = SdeConfig(dt=level_step, scheme=cfg.scheme, seed=cfg.seed)
    extent = float(param - probes.min()) + level_step if kind == "first" else float(probes.max()) + level_step

    def one(i):
        f = rayknight_field(kind, param, step_cfg, extent=extent, replicate=i)
        return [float(np.interp(p, f.levels, f.values)) for p in probes]

    return rngmod.replicate_array(one, n, cfg.workers).reshape(n, probes.size)


# --------------------------------------------------------------------------
# Pitman-Yor functional and BESQ deviation bound


def pitman_yor_laplace(eta: float, lam: float) -> float:
    """``E exp(-lam A)`` for ``A = int_eta^inf L^x(tau_1) x^-2 dx``.

    The expression is analytic in ``lam`` on ``(-1/8, inf)`` and is used
    as is for negative ``lam``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not lam > -0.125:
        raise ValueError("lambda must exceed -1/8")
    root = math.sqrt(1.0 + 8.0 * lam)
    return math.exp((1.0 - root) / (2.0 * (1.0 + root) * eta))


@numba.njit(nogil=True, cache=True)
def _pitman_yor_kernel(eta, eps, ds_floor, cap, gen):
    """``int 1{rho > eta} rho^-2 du`` for the reflected motion up to regulator 1/2.

    Steps are scale-adapted, ``ds = eps^2 * max(rho, eta)^2`` (never below
    ``ds_floor``), so a climb to height ``y`` costs ``O(log y)`` steps.
    """
    b = 0.0
    m = 0.0
    acc = 0.0
    while True:
        rho = b - m
        scale = rho if rho > eta else eta
        ds = eps * eps * scale * scale
        if ds < ds_floor:
            ds = ds_floor
        bn = b + math.sqrt(ds) * gen.standard_normal()
        lo = 0.5 * (b + bn - math.sqrt((bn - b) ** 2 - 2.0 * ds * math.log(gen.random())))
        mn = m if m < lo else lo
        rn = bn - mn
        f0 = 1.0 / (rho * rho) if rho > eta else 0.0
        f1 = 1.0 / (rn * rn) if rn > eta else 0.0
        acc += 0.5 * ds * (f0 + f1)
        b = bn
        m = mn
        if -m >= 0.5:
            return acc
        if acc > cap:
            return math.inf


def pitman_yor_samples(eta: float, cfg: SdeConfig, n: int, *, eps: float = 5e-3) -> np.ndarray:
    """Monte Carlo samples of the functional ``A`` at threshold ``eta``."""
    floor = (eps * eta) ** 2

    def one(i):
        gen = rngmod.stream(cfg.seed, "pitman-yor", i)
        return _pitman_yor_kernel(eta, eps, floor, cfg.max_time, gen)

    return rngmod.replicate_array(one, n, cfg.workers)


def besq_deviation_bound(delta: float, v: float) -> float:
    """Upper bound for ``P(sup_{s<=v} |R_s - 1| > delta)`` with ``R`` a BESQ(0) from 1."""
    if not (delta > 0 and v > 0):
        raise ValueError("delta and v must be positive")
    return 4.0 * math.sqrt((1.0 + delta) * v) / delta * math.exp(-(delta**2) / (8.0 * (1.0 + delta) * v))


@numba.njit(nogil=True, cache=True)
def _besq_deviation_kernel(delta, v, h, gen):
    x = 1.0
    t = 0.0
    while t < v - 1e-15:
        x = besq_exact_step(x, 0.0, h, gen)
        t += h
        if abs(x - 1.0) > delta:
            return 1.0
    return 0.0


def besq_deviation_frequency(delta: float, v: float, cfg: SdeConfig, n: int) -> tuple[float, float]:
    """Empirical ``P(max_grid |R - 1| > delta)`` and its standard error.

    The supremum is taken over the grid of step ``cfg.dt``; this can only
    underestimate the continuous-time probability.
    """

    def one(i):
        gen = rngmod.stream(cfg.seed, "besq-deviation", i)
        return _besq_deviation_kernel(delta, v, cfg.dt, gen)

    hits = rngmod.replicate_array(one, n, cfg.workers)
    p = float(hits.mean())
    return p, math.sqrt(p * (1.0 - p) / n)


__all__ = [
    "BrownianPath",
    "FixedTime",
    "InverseLocalTime",
    "LocalTimeField",
    "Passage",
    "StopNotReached",
    "besq_deviation_bound",
    "besq_deviation_frequency",
    "empirical_rayknight",
    "inverse_local_time",
    "local_time_field",
    "pitman_yor_laplace",
    "pitman_yor_samples",
    "rayknight_field",
    "sample_inverse_local_time",
    "simulate_brownian",
    "synthetic_rayknight",
]
