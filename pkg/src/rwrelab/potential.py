"""Random environment: drifted two-sided Brownian potential and its geometry.

The potential ``W(x) = B(x) - kappa * x / 2`` is sampled exactly at the nodes
of a uniform grid containing 0 and interpolated linearly in between. On that
piecewise-linear path the scale function ``A(x) = int_0^x exp(W)`` is exact,
and all sups and infs are taken over grid nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from . import rng as rngmod

_GRID_TOL = 1e-9


class WindowError(ValueError):
    """Raised when a computation needs the environment beyond its sampled window."""

    def __init__(self, message: str, side: str | None = None):
        super().__init__(message)
        self.side = side


@dataclass(frozen=True, eq=False)
class PotentialPath:
    """Potential sampled on the grid ``x_min + k * dx``, ``k = 0..n-1``."""

    kappa: float
    x_min: float
    dx: float
    values: np.ndarray
    seed: int | None = None
    key: tuple = ()

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def origin(self) -> int:
        """Grid index of x = 0."""
        return int(round(-self.x_min / self.dx))

    @property
    def x_max(self) -> float:
        return self.x_min + (self.n - 1) * self.dx

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) - self.origin) * self.dx

    def index(self, x: float) -> int:
        """Grid index of ``x``; raises if ``x`` is not a grid node inside the window."""
        k = (x - self.x_min) / self.dx
        ki = int(round(k))
        if abs(k - ki) > 1e-6:
            raise ValueError(f"x={x} is not a grid node (dx={self.dx})")
        if ki < 0 or ki >= self.n:
            side = "left" if ki < 0 else "right"
            raise WindowError(f"x={x} outside [{self.x_min}, {self.x_max}]", side)
        return ki

    def nearest_index(self, x: float) -> int:
        ki = int(round((x - self.x_min) / self.dx))
        if ki < 0 or ki >= self.n:
            side = "left" if ki < 0 else "right"
            raise WindowError(f"x={x} outside [{self.x_min}, {self.x_max}]", side)
        return ki

    def __call__(self, x):
        return np.interp(x, self.x, self.values)

    def to_csv(self, path: str | Path) -> None:
        header = f"# kappa={self.kappa!r},dx={self.dx!r},seed={self.seed}\nx,W\n"
        body = np.column_stack([self.x, self.values])
        with open(path, "w", encoding="ascii") as fh:
            fh.write(header)
            np.savetxt(fh, body, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path) -> "PotentialPath":
        with open(path, encoding="ascii") as fh:
            meta_line = fh.readline().lstrip("#").strip()
        meta = dict(item.split("=", 1) for item in meta_line.split(","))
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        seed = None if meta.get("seed", "None") == "None" else int(meta["seed"])
        return cls(
            kappa=float(meta["kappa"]),
            x_min=float(data[0, 0]),
            dx=float(meta["dx"]),
            values=data[:, 1].copy(),
            seed=seed,
        )


def sample_potential(
    kappa: float,
    x_min: float,
    x_max: float,
    dx: float,
    seed: int,
    *,
    key: tuple = (),
    noise: bool = True,
) -> PotentialPath:
    """Sample the drifted two-sided Brownian potential on a uniform grid.

    Parameters
    ----------
    kappa : float
        Drift parameter; the potential decreases like ``-kappa * x / 2``.
    x_min, x_max : float
        Window bounds, ``x_min <= 0 <= x_max``. The grid is anchored at 0, so
        ``x_min`` is moved inward to the nearest multiple of ``dx``.
    dx : float
        Grid step.
    seed : int
        Base seed. ``key`` extends the stream key (used for one environment
        per replicate in annealed estimates).
    noise : bool
        Test hook: ``False`` zeroes the Gaussian increments and leaves the pure
        drift ``-kappa * x / 2``.
    """
    if not dx > 0:
        raise ValueError("dx must be positive")
    if not (x_min <= 0 <= x_max):
        raise ValueError("window must bracket 0")
    if not math.isfinite(kappa):
        raise ValueError("kappa must be finite")
    left = int(math.floor(-x_min / dx + _GRID_TOL))
    right = int(math.floor(x_max / dx + _GRID_TOL))
    n = left + right + 1
    g_right = np.zeros(right)
    g_left = np.zeros(left)
    if noise:
        # one stream per side, consumed outward from 0: widening the window
        # keeps every value already sampled
        g_right = rngmod.stream(seed, rngmod.ENVIRONMENT, *key, 0).standard_normal(right) * math.sqrt(dx)
        g_left = rngmod.stream(seed, rngmod.ENVIRONMENT, *key, 1).standard_normal(left) * math.sqrt(dx)
    brownian = np.empty(n)
    brownian[left] = 0.0
    brownian[left + 1 :] = np.cumsum(g_right)
    brownian[:left] = np.cumsum(g_left)[::-1]
    x = (np.arange(n) - left) * dx
    values = brownian - 0.5 * kappa * x
    return PotentialPath(kappa, -left * dx, dx, values, seed, tuple(key))


@dataclass(frozen=True, eq=False)
class ScaleTable:
    """Exact scale function of a piecewise-linear potential.

    Inside cell ``k`` the relation ``exp(W(x)) = ew[k] + slope[k] * (A(x) - A[k])``
    is exact, so the inverse and the clock density ``exp(-2 W(A^-1(b)))``
    need no root finding. ``width[k] = A[k+1] - A[k]`` is kept separately
    because far to the right the cell widths fall below the resolution of
    the cumulative values.
    """

    x: np.ndarray
    A: np.ndarray
    ew: np.ndarray
    slope: np.ndarray
    width: np.ndarray
    origin: int
    dx: float

    def __call__(self, x):
        """A(x) for arbitrary points inside the window."""
        x = np.asarray(x, dtype=float)
        k = np.clip(np.floor((x - self.x[0]) / self.dx).astype(np.int64), 0, self.x.size - 2)
        h = x - self.x[k]
        dw = self.slope[k] * h
        return self.A[k] + self.ew[k] * h * _expm1_ratio(dw)

    def inverse(self, b):
        """A^{-1}(b), exact on each cell."""
        b = np.asarray(b, dtype=float)
        if np.any(b < self.A[0]) or np.any(b > self.A[-1]):
            raise WindowError("value outside the range of the scale function")
        k = np.clip(np.searchsorted(self.A, b, side="right") - 1, 0, self.x.size - 2)
        rel = self.slope[k] * (b - self.A[k]) / self.ew[k]
        small = np.abs(rel) < 1e-12
        safe = np.where(small, 1.0, self.slope[k])
        h = np.where(small, (b - self.A[k]) / self.ew[k], np.log1p(rel) / safe)
        return self.x[k] + h


def _expm1_ratio(z):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


def scale_table(path: PotentialPath) -> ScaleTable:
    """Cell-exact integral of ``exp(W)`` for the piecewise-linear potential."""
    w = path.values
    dw = np.diff(w)
    ew = np.exp(w)
    width = ew[:-1] * path.dx * _expm1_ratio(dw)
    o = path.origin
    A = np.empty(path.n)
    A[o] = 0.0
    A[o + 1 :] = np.cumsum(width[o:])
    A[:o] = -np.cumsum(width[:o][::-1])[::-1]
    return ScaleTable(path.x, A, ew, dw / path.dx, width, o, path.dx)


# --------------------------------------------------------------------------
# valleys


@dataclass(frozen=True, eq=False)
class ValleyDecomposition:
    """Break points ``K[0..i1+1]`` (``K[i1+1] = v``), depths and indices."""

    t: float
    v: float
    K: np.ndarray
    D: np.ndarray
    i0: int
    i1: int
    threshold: float
    window: float
    certified: bool
    K_beyond: float
    K_index: np.ndarray = field(repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": self.t,
                "v": self.v,
                "K": self.K.tolist(),
                "D": self.D.tolist(),
                "i0": self.i0,
                "i1": self.i1,
                "threshold": self.threshold,
                "window": self.window,
                "certified": self.certified,
                "K_beyond": self.K_beyond,
            }
        )

    def intersecting(self, s: float, t: float) -> np.ndarray:
        """Indices ``i >= 1`` with ``[K_i, K_{i+1}) ∩ [s, t)`` non-empty."""
        lo, hi = self.K[:-1], self.K[1:]
        idx = np.nonzero((lo < t) & (hi > s))[0]
        return idx[idx >= 1]


def default_window(kappa: float, t: float) -> float:
    return 10.0 * 3.0 / kappa * math.log(t)


def _suffix_max_after(w: np.ndarray) -> np.ndarray:
    """``out[j] = max(w[j+1:])`` with ``-inf`` at the end."""
    out = np.empty_like(w)
    out[-1] = -np.inf
    out[:-1] = np.maximum.accumulate(w[::-1])[::-1][1:]
    return out


def _max_drawup(w: np.ndarray) -> float:
    """``max_{i <= j} w[j] - w[i]`` (zero for a non-increasing array)."""
    if w.size == 0:
        return 0.0
    return float(np.max(w - np.minimum.accumulate(w)))


def next_break(
    w: np.ndarray, start: int, threshold: float, smax: np.ndarray, near_record: bool = True
) -> int:
    """First index after ``start`` meeting the drop (and near-record) conditions.

    Returns -1 when no index in the array qualifies.
    """
    seg = w[start + 1 :]
    drop = w[start] - np.minimum.accumulate(seg) > threshold
    if near_record:
        drop &= seg >= smax[start + 1 :] - 1.0
    hits = np.flatnonzero(drop)
    return int(start + 1 + hits[0]) if hits.size else -1


def decompose_valleys(
    path: PotentialPath,
    t: float,
    v: float,
    *,
    window: float | None = None,
    near_record: bool = True,
) -> ValleyDecomposition:
    """Valley decomposition of the potential for horizon ``t`` up to level ``v``.

    Break points start at ``K_0 = -floor(t)``; ``K_{i+1}`` is the first grid
    point after ``K_i`` where the potential has dropped by more than
    ``(3/kappa) log floor(t)`` below ``W(K_i)`` and sits within 1 of the
    supremum of the potential to its right (over the sampled window).
    """
    kappa = path.kappa
    if kappa <= 0:
        raise ValueError("valley decomposition needs kappa > 0")
    ft = math.floor(t)
    if ft < 2:
        raise ValueError("horizon must satisfy floor(t) >= 2")
    if not (-ft < v):
        raise ValueError("v must lie to the right of K_0")
    threshold = 3.0 / kappa * math.log(ft)
    if window is None:
        window = default_window(kappa, t)
    if v + window > path.x_max + 1e-9:
        raise WindowError(
            f"window too small: need x_max >= {v + window:.6g}, have {path.x_max:.6g}", "right"
        )
    start = path.index(-ft)
    stop = path.nearest_index(v + window)
    w = path.values[start : stop + 1]
    smax = _suffix_max_after(w)
    iv = (v - path.x_min) / path.dx - start

    ks = [0]
    certified = True
    while ks[-1] < iv - 1e-9:
        nxt = next_break(w, ks[-1], threshold, smax, near_record)
        if nxt < 0:
            raise WindowError("window too small to locate the next break point", "right")
        if near_record and w.size - 1 > nxt and np.argmax(w[nxt + 1 :]) == w.size - nxt - 2:
            certified = False
        ks.append(nxt)
    beyond = ks.pop()
    kidx = np.asarray(ks, dtype=np.int64) + start
    K = np.append(path.x[kidx], v)
    i1 = len(ks) - 1
    i0 = int(np.flatnonzero(K[:-1] < 0)[-1]) if np.any(K[:-1] < 0) else -1
    bounds = np.append(kidx, start + int(math.ceil(iv - 1e-9)))
    D = np.array(
        [_max_drawup(path.values[bounds[i] : bounds[i + 1] + 1]) for i in range(len(ks))]
    )
    return ValleyDecomposition(
        t=float(t),
        v=float(v),
        K=K,
        D=D,
        i0=i0,
        i1=i1,
        threshold=threshold,
        window=float(window),
        certified=certified,
        K_beyond=float(path.x[beyond + start]),
        K_index=kidx,
    )


def interval_depths(path: PotentialPath, a: float, c: float) -> tuple[float, float, float, float]:
    """Depths ``(D_plus, D_minus, D, M)`` of the potential on ``[a, c]``.

    ``D_plus`` is the largest rise from a point to anything on its right,
    ``D_minus`` the largest rise towards the left; one linear sweep each.
    """
    if not a < c:
        raise ValueError("need a < c")
    ia, ic = path.nearest_index(a), path.nearest_index(c)
    w = path.values[ia : ic + 1]
    pre_min_excl = np.minimum.accumulate(np.concatenate(([np.inf], w[:-1])))
    suf_max = np.maximum.accumulate(w[::-1])[::-1]
    pre_max = np.maximum.accumulate(w)
    suf_min_excl = np.minimum.accumulate(np.concatenate((w[1:], [np.inf]))[::-1])[::-1]
    d_plus = max(0.0, float(np.max(suf_max - pre_min_excl)))
    d_minus = max(0.0, float(np.max(pre_max - suf_min_excl)))
    return d_plus, d_minus, min(d_plus, d_minus), float(w.max() - w.min())


# --------------------------------------------------------------------------
# environment events


@dataclass(frozen=True)
class EventReport:
    t: float
    v: float
    A: bool
    G_t: bool
    G_v: bool
    B: tuple[bool, ...]
    K: bool
    L: bool

    @property
    def omega(self) -> bool:
        return self.A and self.G_t and self.G_v and all(self.B) and self.K and self.L


def _window_slice(path: PotentialPath, lo: float, hi: float) -> np.ndarray:
    return path.values[path.nearest_index(lo) : path.nearest_index(hi) + 1]


def _g_bound(kappa: float, u: float) -> float:
    return (math.log(u) + 3.0 * math.log(math.log(u))) / kappa


def check_events(
    path: PotentialPath,
    t: float,
    m: int,
    epsilon: float,
    *,
    nu: float | None = None,
    v: float | None = None,
    window: float | None = None,
) -> EventReport:
    """Evaluate the environment events A, G(t), G(v), B(t, m), K, L on the grid.

    Exactly one of ``nu`` (``v = t**nu``) or ``v`` must be given.
    """
    if (nu is None) == (v is None):
        raise ValueError("give exactly one of nu or v")
    if m < 2:
        raise ValueError("m must be at least 2")
    if v is None:
        v = t**nu
    if path.x_min > -t + 1e-9 or path.x_max < t - 1e-9:
        raise WindowError("grid does not cover [-t, t]")
    kappa = path.kappa
    valleys = decompose_valleys(path, t, v, window=window)

    a_ok = float(np.max(np.diff(valleys.K))) <= math.log(t) ** 2
    g_t = _max_drawup(_window_slice(path, -t, t)) <= _g_bound(kappa, t)
    g_v = _max_drawup(_window_slice(path, -v, v)) <= _g_bound(kappa, v)

    depths_near = valleys.D[valleys.intersecting(-v, v)]
    b_ok = []
    for k in range(1, m):
        level = math.log(v ** (k / m)) / kappa + 4.0 * math.log(math.log(v))
        b_ok.append(int(np.sum(depths_near >= level)) <= v ** (1.0 - k / m))

    seg = path.values[path.nearest_index(-t) : path.nearest_index(t) + 1]
    # windows of `size` consecutive nodes contain exactly the pairs closer than 1
    size = int(math.ceil(1.0 / path.dx - 1e-9))
    osc = maximum_filter1d(seg, size, mode="nearest") - minimum_filter1d(seg, size, mode="nearest")
    k_ok = float(osc.max()) <= math.sqrt(math.log(t)) * math.log(math.log(t))

    rise = _max_drawup(_window_slice(path, 0.0, v))
    l_ok = rise > (1.0 - epsilon) / kappa * math.log(v)
    return EventReport(float(t), float(v), bool(a_ok), bool(g_t), bool(g_v), tuple(b_ok), bool(k_ok), bool(l_ok))


# --------------------------------------------------------------------------
# reflected process and its excursions


@dataclass(frozen=True, eq=False)
class ExcursionStatistics:
    """Excursions of ``U = W - running min W`` away from zero.

    ``lengths`` and ``maxima`` hold one entry per excursion. Statements about
    "the excursion at a typical point" weight each excursion by its length.
    """

    reflected: np.ndarray
    lengths: np.ndarray
    maxima: np.ndarray
    dx: float

    @classmethod
    def pooled(cls, parts) -> "ExcursionStatistics":
        """Excursions of several independent environments in one sample (reflected path dropped)."""
        parts = list(parts)
        if not parts or len({p.dx for p in parts}) != 1:
            raise ValueError("need at least one part, all with the same dx")
        return cls(
            np.empty(0),
            np.concatenate([p.lengths for p in parts]),
            np.concatenate([p.maxima for p in parts]),
            parts[0].dx,
        )

    @property
    def count(self) -> int:
        return int(self.lengths.size)

    def straddling_survival(self, y) -> np.ndarray:
        """Fraction of excursion time spent in excursions with maximum above ``y``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        order = np.argsort(self.maxima)
        m_sorted = self.maxima[order]
        tail = np.cumsum(self.lengths[order][::-1])[::-1]
        pos = np.searchsorted(m_sorted, y, side="right")
        total = tail[0]
        out = np.where(pos < m_sorted.size, tail[np.minimum(pos, m_sorted.size - 1)], 0.0)
        return out / total

    def straddling_mean_length(self) -> tuple[float, float]:
        """Length-biased mean busy period and its delta-method standard error."""
        ell = self.lengths
        r = float(np.sum(ell**2) / np.sum(ell))
        resid = ell**2 - r * ell
        se = float(np.sqrt(np.sum(resid**2)) / np.sum(ell))
        return r, se


def excursion_statistics(path: PotentialPath) -> ExcursionStatistics:
    """Segment the reflected process ``W - running min W`` into excursions."""
    if path.kappa <= 0:
        raise ValueError("excursion statistics need kappa > 0 (positive recurrence)")
    w = path.values
    u = w - np.minimum.accumulate(w)
    zero = np.flatnonzero(u <= 0.0)
    # an excursion spans consecutive zeros that are more than one cell apart
    gaps = np.diff(zero)
    starts = zero[:-1][gaps > 1]
    ends = zero[1:][gaps > 1]
    closed = u[: zero[-1] + 1] if zero.size else u[:0]
    cm = np.maximum.reduceat(closed, starts) if starts.size else np.empty(0)
    return ExcursionStatistics(u, (ends - starts) * path.dx, cm, path.dx)


def straddling_max_survival(kappa: float, y) -> np.ndarray:
    """Closed-form survival function of the maximum of the excursion straddling a point."""
    y = np.asarray(y, dtype=float)
    ky = kappa * y
    e = np.exp(-ky)
    one_m = -np.expm1(-ky)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = 2.0 * e * (ky - one_m) / one_m**2
    return np.where(y <= 0, 1.0, val)
