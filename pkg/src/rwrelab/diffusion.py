"""Diffusion in a sampled potential via the Brownian time change.

``X = A^{-1}(B(T^{-1}(t)))`` with ``T(s) = int_0^s exp(-2 W(A^{-1}(B)))``.
The driving Brownian motion ``B`` lives on the scale axis and is tracked in
cell-local coordinates ``(cell, offset)``: far to the right the scale cells
are many orders of magnitude narrower than ``A`` itself, so absolute values
of ``B`` would lose all resolution.

Each step uses the B-clock increment ``ds = dt * exp(2 W(X))``, so that every
step advances the diffusion clock by about ``dt``; the clock itself is
accumulated with the trapezoid rule in ``exp(-2 W)``. Steps across which
``exp(W)`` changes by more than ``SPLIT_RATIO`` are refined at bridge
midpoints before they are taken.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numba
import numpy as np

from . import rng as rngmod
from .potential import PotentialPath, ScaleTable, ValleyDecomposition, WindowError, sample_potential, scale_table
from .processes import SdeConfig, besq_exact_step

MOVING, HIT_UP, HIT_DOWN, EXIT_LEFT, EXIT_RIGHT, TIME_CAP, BUFFER_FULL = range(7)


@numba.njit(nogil=True, cache=True)
def _walk(width, k, off, dist, up_stop, down_stop, origin, reflect):
    """Move the scale-axis position by ``dist``.

    Stops early on reaching node ``up_stop`` going up, node ``down_stop``
    going down, or a window edge. With ``reflect`` the motion is mirrored at
    the origin node. Returns ``(k, off, travelled, travelled_right_of_origin, code)``.
    """
    n_cells = width.size
    up = dist >= 0.0
    remaining = abs(dist)
    travelled = 0.0
    pos = 0.0
    while True:
        if up:
            room = width[k] - off
            if room > remaining:
                off += remaining
                travelled += remaining
                if k >= origin:
                    pos += remaining
                return k, off, travelled, pos, MOVING
            travelled += room
            remaining -= room
            if k >= origin:
                pos += room
            k += 1
            off = 0.0
            if k == up_stop:
                return k, off, travelled, pos, HIT_UP
            if k >= n_cells:
                return k, off, travelled, pos, EXIT_RIGHT
        else:
            if off > remaining:
                off -= remaining
                travelled += remaining
                if k >= origin:
                    pos += remaining
                return k, off, travelled, pos, MOVING
            travelled += off
            remaining -= off
            if k >= origin:
                pos += off
            off = 0.0
            if k == down_stop:
                return k, off, travelled, pos, HIT_DOWN
            if reflect and k == origin:
                up = True
                continue
            k -= 1
            if k < 0:
                return 0, 0.0, travelled, pos, EXIT_LEFT
            off = width[k]


# Largest accepted change of the scale density exp(W) across one step.
# Steps that change it more are split at a Brownian-bridge midpoint, so a
# single increment never jumps from a steep region into a trap.
SPLIT_RATIO = 1.5
MAX_SPLITS = 48


@numba.njit(nogil=True, cache=True)
def _density(ew, slope, k, off):
    if k >= ew.size - 1:
        return ew[ew.size - 1]
    e = ew[k] + slope[k] * off
    return e if e > 1e-300 else 1e-300


@numba.njit(nogil=True, cache=True)
def _too_steep(e, en):
    return e > SPLIT_RATIO * en or en > SPLIT_RATIO * e


@numba.njit(nogil=True, cache=True)
def _next_increment(e, dt, gen, pend_db, pend_ds, npend):
    """Pop a pending bridge piece, or draw a fresh step ``ds = dt e^2``."""
    if npend > 0:
        npend -= 1
        return pend_db[npend], pend_ds[npend], npend
    ds = dt * e * e
    return math.sqrt(ds) * gen.standard_normal(), ds, npend


@numba.njit(nogil=True, cache=True)
def _split(db, ds, gen, pend_db, pend_ds, npend):
    """Replace ``(db, ds)`` by its two bridge halves (first half on top)."""
    half = 0.5 * ds
    m = 0.5 * db + math.sqrt(0.5 * half) * gen.standard_normal()
    pend_db[npend] = db - m
    pend_ds[npend] = half
    pend_db[npend + 1] = m
    pend_ds[npend + 1] = half
    return npend + 2


@numba.njit(nogil=True, cache=True)
def _hit_kernel(ew, slope, width, origin, k, off, up_stop, down_stop, reflect, dt, t_max, gen):
    """Run until a stop node, a window edge or the time cap.

    Returns ``(code, time, time_right_of_origin, time_left_of_origin)``; the
    two occupation times are accumulated separately from the clock.
    """
    pend_db = np.empty(MAX_SPLITS + 2)
    pend_ds = np.empty(MAX_SPLITS + 2)
    npend = 0
    t = 0.0
    right = 0.0
    left = 0.0
    e = _density(ew, slope, k, off)
    while True:
        db, ds, npend = _next_increment(e, dt, gen, pend_db, pend_ds, npend)
        if db == 0.0:
            continue
        kk, oo, trav, pos, code = _walk(width, k, off, db, up_stop, down_stop, origin, reflect)
        if code == EXIT_LEFT or code == EXIT_RIGHT:
            # a large step from a high region can overshoot a far edge; refine first
            if npend < MAX_SPLITS:
                npend = _split(db, ds, gen, pend_db, pend_ds, npend)
                continue
            return code, t, right, left
        en = _density(ew, slope, kk, oo)
        if _too_steep(e, en) and npend < MAX_SPLITS:
            npend = _split(db, ds, gen, pend_db, pend_ds, npend)
            continue
        if code == MOVING:
            d_t = 0.5 * (ds / (e * e) + ds / (en * en))
            right += d_t * (pos / trav)
            left += d_t * ((trav - pos) / trav)
            t += d_t
            k, off, e = kk, oo, en
            if t >= t_max:
                return TIME_CAP, t, right, left
        else:
            d_t = trav / abs(db) * 0.5 * (ds / (e * e) + ds / (en * en))
            if trav > 0.0:
                right += d_t * (pos / trav)
                left += d_t * ((trav - pos) / trav)
            return code, t + d_t, right, left


@numba.njit(nogil=True, cache=True)
def _path_kernel(ew, slope, width, origin, k, off, t, up_stop, dt, t_end, gen, t_buf, k_buf, o_buf, start):
    """Record ``(time, cell, offset)`` after every accepted step from index ``start``.

    Stops at ``t_end``, on reaching node ``up_stop`` (recorded as the last
    sample) or when the buffers are full. Returns ``(count, code, k, off, t)``.
    Pending bridge pieces are dropped when the buffer fills up; the next call
    draws fresh increments, which keeps the law of the path unchanged.
    """
    pend_db = np.empty(MAX_SPLITS + 2)
    pend_ds = np.empty(MAX_SPLITS + 2)
    npend = 0
    e = _density(ew, slope, k, off)
    i = start
    cap = t_buf.size
    while i < cap:
        db, ds, npend = _next_increment(e, dt, gen, pend_db, pend_ds, npend)
        if db == 0.0:
            continue
        kk, oo, trav, pos, code = _walk(width, k, off, db, up_stop, -1, origin, False)
        if code == EXIT_LEFT or code == EXIT_RIGHT:
            # a large step from a high region can overshoot a far edge; refine first
            if npend < MAX_SPLITS:
                npend = _split(db, ds, gen, pend_db, pend_ds, npend)
                continue
            return i, code, k, off, t
        en = _density(ew, slope, kk, oo)
        if _too_steep(e, en) and npend < MAX_SPLITS:
            npend = _split(db, ds, gen, pend_db, pend_ds, npend)
            continue
        if code == MOVING:
            t += 0.5 * (ds / (e * e) + ds / (en * en))
            k, off, e = kk, oo, en
            t_buf[i] = t
            k_buf[i] = k
            o_buf[i] = off
            i += 1
            if t >= t_end:
                return i, TIME_CAP, k, off, t
        else:
            t += trav / abs(db) * 0.5 * (ds / (e * e) + ds / (en * en))
            t_buf[i] = t
            k_buf[i] = kk
            o_buf[i] = 0.0
            return i + 1, HIT_UP, kk, 0.0, t
    return i, BUFFER_FULL, k, off, t


@numba.njit(nogil=True, cache=True)
def _lattice_kernel(ew, slope, width, origin, nodes, j_lo, dt, t_max, gen, v_buf, j_buf):
    """Run until the last lattice node is reached, recording lattice visits.

    ``nodes`` are increasing grid-node indices; the origin lies in
    ``[nodes[j_lo], nodes[j_lo + 1])``. A visit is recorded when the path
    reaches a lattice node other than the one visited last. Visit times are
    interpolated linearly inside the step. Returns
    ``(count, code, H, theta1, theta2)``.
    """
    pend_db = np.empty(MAX_SPLITS + 2)
    pend_ds = np.empty(MAX_SPLITS + 2)
    npend = 0
    k = origin
    off = 0.0
    e = ew[k]
    t = 0.0
    right = 0.0
    left = 0.0
    last = nodes.size - 1
    count = 0
    up_j = j_lo + 1
    down_j = j_lo
    if nodes[j_lo] == origin:
        v_buf[0] = 0.0
        j_buf[0] = j_lo
        count = 1
        down_j = j_lo - 1
    while True:
        db, ds, npend = _next_increment(e, dt, gen, pend_db, pend_ds, npend)
        if db == 0.0:
            continue
        # trial move to the end of the step, ignoring lattice nodes
        kk, oo, trav, p, code = _walk(width, k, off, db, nodes[last], -1, origin, False)
        if code == EXIT_LEFT or code == EXIT_RIGHT:
            # a large step from a high region can overshoot a far edge; refine first
            if npend < MAX_SPLITS:
                npend = _split(db, ds, gen, pend_db, pend_ds, npend)
                continue
            return count, code, t, right, left
        en = _density(ew, slope, kk, oo)
        if _too_steep(e, en) and npend < MAX_SPLITS:
            npend = _split(db, ds, gen, pend_db, pend_ds, npend)
            continue
        step = abs(db)
        sign = 1.0 if db > 0.0 else -1.0
        travelled = 0.0
        pos = 0.0
        first_new = count
        finished = False
        while True:
            down_stop = nodes[down_j] if down_j >= 0 else -1
            kk, oo, trav, p, code = _walk(
                width, k, off, sign * (step - travelled), nodes[up_j], down_stop, origin, False
            )
            travelled += trav
            pos += p
            k, off = kk, oo
            if code == HIT_UP or code == HIT_DOWN:
                j_new = up_j if code == HIT_UP else down_j
                if count >= v_buf.size:
                    return count, BUFFER_FULL, t, right, left
                v_buf[count] = travelled / step
                j_buf[count] = j_new
                count += 1
                if j_new == last:
                    finished = True
                    break
                up_j = j_new + 1
                down_j = j_new - 1
                if travelled >= step:
                    break
            else:
                break
        if finished:
            frac = travelled / step
            en = ew[k]
            full = 0.5 * (ds / (e * e) + ds / (en * en))
            d_t = frac * full
            scale = full
        else:
            d_t = 0.5 * (ds / (e * e) + ds / (en * en))
            scale = d_t
            e = en
        for q in range(first_new, count):
            v_buf[q] = t + v_buf[q] * scale
        if travelled > 0.0:
            right += d_t * (pos / travelled)
            left += d_t * ((travelled - pos) / travelled)
        t += d_t
        if finished:
            return count, HIT_UP, t, right, left
        if t >= t_max:
            return count, TIME_CAP, t, right, left


@numba.njit(nogil=True, cache=True)
def _rayknight_kernel(ew, width, dx, origin, iv, gen):
    """Hitting time of node ``iv`` from the origin as a local-time integral.

    ``H(v) = int_{-inf}^{v} exp(-W(x)) L(A(v) - A(x)) dx`` where ``L`` is a
    BESQ(2) process from 0 in the level ``A(v) - A(x)`` while ``x >= 0`` and
    BESQ(0) afterwards, sampled with exact transitions cell by cell.
    Returns ``(code, H, theta1, theta2)``.
    """
    th1 = 0.0
    th2 = 0.0
    ell = 0.0
    for j in range(iv - 1, -1, -1):
        if j >= origin:
            ln = besq_exact_step(ell, 2.0, width[j], gen)
            th1 += 0.5 * dx * (ell / ew[j + 1] + ln / ew[j])
        else:
            ln = besq_exact_step(ell, 0.0, width[j], gen)
            th2 += 0.5 * dx * (ell / ew[j + 1] + ln / ew[j])
            if ln <= 0.0:
                return HIT_UP, th1 + th2, th1, th2
        ell = ln
    if iv <= origin:
        return HIT_UP, 0.0, 0.0, 0.0
    return EXIT_LEFT, th1 + th2, th1, th2


# --------------------------------------------------------------------------
# public API


class BudgetExceeded(RuntimeError):
    """The time budget ran out before the stopping rule was met."""


def _check_code(code: int, what: str) -> None:
    if code == EXIT_LEFT:
        raise WindowError(f"{what}: window exceeded on the left", "left")
    if code == EXIT_RIGHT:
        raise WindowError(f"{what}: window exceeded on the right", "right")


@dataclass(frozen=True, eq=False)
class DiffusionPath:
    """Diffusion path on a uniform clock plus the raw (non-uniform) step samples."""

    env: PotentialPath
    table: ScaleTable
    times: np.ndarray
    positions: np.ndarray
    raw_times: np.ndarray
    raw_positions: np.ndarray
    seed: int
    hit_time: float | None = None


def _positions(table: ScaleTable, k: np.ndarray, off: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    last = table.x.size - 1
    inner = np.minimum(k, last - 1)
    s = table.slope[inner]
    rel = s * off / table.ew[inner]
    small = np.abs(rel) < 1e-12
    h = np.where(small, off / table.ew[inner], np.log1p(rel) / np.where(small, 1.0, s))
    return np.where(k >= last, table.x[last], table.x[inner] + h)


def simulate_path(
    env: PotentialPath,
    T: float,
    cfg: SdeConfig,
    *,
    replicate: int = 0,
    until: float | None = None,
    table: ScaleTable | None = None,
) -> DiffusionPath:
    """Simulate the diffusion up to time ``T`` (or until it first reaches ``until``).

    The output holds the raw samples after every driving step and their
    resampling onto the uniform clock ``0, dt, 2 dt, ...``.
    """
    if table is None:
        table = scale_table(env)
    up_stop = -1 if until is None else env.nearest_index(until)
    gen = rngmod.stream(cfg.seed, rngmod.DRIVING, replicate)
    # the buffer grows on demand; cap the first allocation for long horizons
    size = min(int(1.5 * T / cfg.dt) + 1024, 1 << 20)
    t_buf, k_buf, o_buf = np.empty(size), np.empty(size, np.int64), np.empty(size)
    t_buf[0], k_buf[0], o_buf[0] = 0.0, env.origin, 0.0
    k, off, t, i = env.origin, 0.0, 0.0, 1
    while True:
        i, code, k, off, t = _path_kernel(
            table.ew, table.slope, table.width, env.origin, k, off, t, up_stop, cfg.dt, T, gen,
            t_buf, k_buf, o_buf, i,
        )
        if code != BUFFER_FULL:
            break
        t_buf = np.concatenate([t_buf, np.empty(size)])
        k_buf = np.concatenate([k_buf, np.empty(size, np.int64)])
        o_buf = np.concatenate([o_buf, np.empty(size)])
    _check_code(code, "simulate_path")
    raw_t = t_buf[:i].copy()
    raw_x = _positions(table, k_buf[:i], o_buf[:i])
    end = min(T, raw_t[-1])
    grid = np.arange(0.0, end + 0.5 * cfg.dt, cfg.dt)
    grid = grid[grid <= raw_t[-1]]
    pos = np.interp(grid, raw_t, raw_x)
    hit = float(raw_t[-1]) if code == HIT_UP else None
    return DiffusionPath(env, table, grid, pos, raw_t, raw_x, cfg.seed, hit)


def _position_run(T, cfg, replicate, chunk=4096):
    """``run(env, table)`` returning ``(code, X_T, max_{s<=T} X_s)`` without storing the path."""

    def run(e, tab):
        gen = rngmod.stream(cfg.seed, rngmod.DRIVING, replicate)
        t_buf, k_buf, o_buf = np.empty(chunk), np.empty(chunk, np.int64), np.empty(chunk)
        k, off, t = e.origin, 0.0, 0.0
        t_prev, x_prev, x_max = 0.0, 0.0, 0.0
        while True:
            i, code, k, off, t = _path_kernel(
                tab.ew, tab.slope, tab.width, e.origin, k, off, t, -1, cfg.dt, T, gen, t_buf, k_buf, o_buf, 0
            )
            if code in (EXIT_LEFT, EXIT_RIGHT):
                return code, math.nan, math.nan
            ts = np.concatenate([[t_prev], t_buf[:i]])
            xs = np.concatenate([[x_prev], _positions(tab, k_buf[:i], o_buf[:i])])
            if code == BUFFER_FULL:
                x_max = max(x_max, float(xs.max()))
                t_prev, x_prev = float(ts[-1]), float(xs[-1])
                continue
            x_T = float(np.interp(T, ts, xs))
            keep = ts <= T
            x_max = max(x_max, float(xs[keep].max()), x_T)
            return TIME_CAP, x_T, x_max

    return run


def position_at(
    env: PotentialPath | None,
    T: float,
    cfg: SdeConfig,
    n: int = 1,
    *,
    annealed: tuple[float, float, float, float] | None = None,
) -> np.ndarray:
    """Samples of ``(X_T, max_{s<=T} X_s)``; shape ``(n, 2)``.

    ``X_T`` is interpolated linearly between the raw steps around ``T``.
    """
    if annealed is None and env is None:
        raise ValueError("need an environment or annealed window")
    shared = None if annealed is not None else (env, scale_table(env))

    def one(i):
        run = _position_run(T, cfg, i)
        out = run(*shared) if shared is not None else _run_annealed(annealed, cfg.seed, i, run)
        _check_code(out[0], "position_at")
        return out[1], out[2]

    return rngmod.replicate_array(one, n, cfg.workers).reshape(n, 2)


def occupation_split(path: DiffusionPath, v: float) -> tuple[float, float]:
    """Times spent right and left of 0 before the first passage at ``v``."""
    t, x = path.raw_times, path.raw_positions
    reached = np.flatnonzero(x >= v - 1e-12)
    if reached.size == 0:
        raise ValueError("path does not reach v")
    n = reached[0]
    t, x = t[: n + 1], x[: n + 1]
    x0, x1, d_t = x[:-1], x[1:], np.diff(t)
    frac = np.where(
        (x0 >= 0) & (x1 >= 0),
        1.0,
        np.where((x0 < 0) & (x1 < 0), 0.0, np.maximum(x0, x1) / np.maximum(np.abs(x1 - x0), 1e-300)),
    )
    theta1 = float(np.sum(d_t * frac))
    return theta1, float(t[-1]) - theta1


ANNEALED_WIDENINGS = 6


def annealed_environment(
    window: tuple[float, float, float, float], seed: int, replicate: int, widen_left: int = 0, widen_right: int = 0
) -> PotentialPath:
    """Environment of one annealed replicate; each ``widen`` doubles that side's extent.

    An optional fifth window entry ``False`` switches the environment noise
    off (pure drift), for calibration runs.
    """
    kappa, x_min, x_max, dx = window[:4]
    noise = bool(window[4]) if len(window) > 4 else True
    return sample_potential(
        kappa, x_min * 2**widen_left, x_max * 2**widen_right, dx, seed, key=(replicate,), noise=noise
    )


def _run_annealed(window, seed, replicate, run):
    """Call ``run(env, table)``, widening the window on the side where it exits.

    Each side of the environment is drawn from its own stream outward from
    0, and ``run`` restarts its driving stream, so a retry on a wider window
    reproduces the same path up to the old exit point. The result is
    therefore the one an unbounded window would give.
    """
    left = right = 0
    while True:
        e = annealed_environment(window, seed, replicate, left, right)
        out = run(e, scale_table(e))
        if out[0] == EXIT_LEFT and left < ANNEALED_WIDENINGS:
            left += 1
        elif out[0] == EXIT_RIGHT and right < ANNEALED_WIDENINGS:
            right += 1
        else:
            return out


def _hitting_run(v, method, cfg, replicate, reflect=False):
    def run(e, tab):
        iv = e.nearest_index(v)
        if iv <= e.origin:
            if iv < e.origin:
                raise ValueError("v must be positive")
            return HIT_UP, 0.0, 0.0, 0.0
        gen = rngmod.stream(cfg.seed, rngmod.DRIVING, replicate)
        if method == "path":
            return _hit_kernel(
                tab.ew, tab.slope, tab.width, e.origin, e.origin, 0.0, iv, -1, reflect, cfg.dt, cfg.max_time, gen
            )
        return _rayknight_kernel(tab.ew, tab.width, e.dx, e.origin, iv, gen)

    return run


def first_hitting(
    env: PotentialPath | None,
    v: float,
    cfg: SdeConfig,
    n: int = 1,
    *,
    method: str = "path",
    annealed: tuple[float, float, float, float] | None = None,
    table: ScaleTable | None = None,
) -> np.ndarray:
    """Samples of ``(H(v), theta1, theta2)``; shape ``(n, 3)``.

    ``method="path"`` runs the time-changed Brownian motion until its first
    passage at ``A(v)`` without storing the path. ``method="rayknight"``
    samples the same random variable exactly in law (for the given
    piecewise-linear potential) through the local-time field of the driving
    motion at that passage time; its cost does not grow with ``H(v)``.

    With ``annealed=(kappa, x_min, x_max, dx)`` a fresh potential is sampled
    for each replicate (stream key = replicate index) and ``env`` is ignored;
    the left edge is pushed out automatically when a replicate reaches it.
    Paths still running at ``cfg.max_time`` are reported with ``H = inf``.
    """
    if method not in ("path", "rayknight"):
        raise ValueError(f"unknown method {method!r}")
    if annealed is None and env is None:
        raise ValueError("need an environment or annealed window")
    shared = None
    if annealed is None:
        shared = (env, table if table is not None else scale_table(env))

    def one(i):
        run = _hitting_run(v, method, cfg, i)
        out = run(*shared) if shared is not None else _run_annealed(annealed, cfg.seed, i, run)
        code, h, th1, th2 = out
        _check_code(code, "first_hitting")
        if code == TIME_CAP:
            return math.inf, math.inf, math.inf
        return h, th1, th2

    return rngmod.replicate_array(one, n, cfg.workers).reshape(n, 3)


def positive_occupation(
    env: PotentialPath | None,
    v: float,
    cfg: SdeConfig,
    n: int = 1,
    *,
    annealed: tuple[float, float, float, float] | None = None,
) -> np.ndarray:
    """Samples of ``theta1(v)``, the time spent in ``[0, inf)`` before reaching ``v``.

    The driving motion is reflected at the scale value of 0, which removes
    the excursions to the left of the origin without changing the time spent
    on the right.
    """
    if annealed is None and env is None:
        raise ValueError("need an environment or annealed window")
    shared = None if annealed is not None else (env, scale_table(env))

    def one(i):
        run = _hitting_run(v, "path", cfg, i, reflect=True)
        out = run(*shared) if shared is not None else _run_annealed(annealed, cfg.seed, i, run)
        code, h = out[0], out[1]
        _check_code(code, "positive_occupation")
        return math.inf if code == TIME_CAP else h

    return rngmod.replicate_array(one, n, cfg.workers)


def exit_time(
    env: PotentialPath,
    a: float,
    c: float,
    x0: float,
    cfg: SdeConfig,
    n: int = 1,
    table: ScaleTable | None = None,
) -> np.ndarray:
    """Samples of ``(H(a) ∧ H(c), exited_at_a)`` from ``x0``; shape ``(n, 2)``."""
    if not a <= x0 <= c:
        raise ValueError("need a <= x0 <= c")
    tab = table if table is not None else scale_table(env)
    ia, ic, ix = env.nearest_index(a), env.nearest_index(c), env.nearest_index(x0)
    if ix in (ia, ic):
        return np.column_stack([np.zeros(n), np.full(n, float(ix == ia))])

    def one(i):
        gen = rngmod.stream(cfg.seed, "exit", i)
        code, h, _, _ = _hit_kernel(
            tab.ew, tab.slope, tab.width, env.origin, ix, 0.0, ic, ia, False, cfg.dt, cfg.max_time, gen
        )
        _check_code(code, "exit_time")
        if code == TIME_CAP:
            return math.inf, math.nan
        return h, float(code == HIT_DOWN)

    return rngmod.replicate_array(one, n, cfg.workers).reshape(n, 2)


def exit_side_probability(table: ScaleTable, a: float, x: float, c: float) -> float:
    """Exact ``P^x(H(a) < H(c)) = (A(c) - A(x)) / (A(c) - A(a))`` from the cell widths."""
    dx = table.dx
    ia, ix, ic = (int(round((p - table.x[0]) / dx)) for p in (a, x, c))
    right = math.fsum(table.width[ix:ic])
    left = math.fsum(table.width[ia:ix])
    return right / (left + right)


# --------------------------------------------------------------------------
# hitting-time decomposition


@dataclass(frozen=True)
class HittingBreakdown:
    H_total: float
    H_init: float
    H_dir: float
    H_back: float
    H_left: float
    H_right: float
    xi: tuple[int, ...]
    B_total: int
    theta1: float
    theta2: float
    visits: int
    tube_halfwidth: float = 0.0

    @property
    def parts_sum(self) -> float:
        return math.fsum((self.H_init, self.H_dir, self.H_back, self.H_left, self.H_right))

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def assemble_breakdown(
    times: np.ndarray,
    visits: np.ndarray,
    i0: int,
    i1: int,
    h_total: float,
    theta1: float = math.nan,
    theta2: float = math.nan,
) -> HittingBreakdown:
    """Split ``[0, H]`` into the five parts from the lattice visit sequence.

    ``visits[k]`` is the lattice index reached at ``times[k]``; the last entry
    is ``i1 + 1`` (the target). Every transition between consecutive visits is
    attributed to exactly one part:

    * init: everything before the first visit of ``K_{i0+1}``;
    * right: the final transition ``K_{i1} -> v`` (empty when ``i1 == i0``);
    * dir: the first forward transition ``K_i -> K_{i+1}`` for ``i0 < i < i1``;
    * back: backtracks ``K_{i+1} -> K_i`` and later forward re-crossings for ``i > i0``;
    * left: all remaining transitions, which touch ``K_{i0}`` or points left of it.
    """
    parts = dict(init=0.0, dir=0.0, back=0.0, left=0.0, right=0.0)
    xi = np.zeros(i1 + 1, dtype=np.int64)
    crossed = np.zeros(i1 + 2, dtype=bool)
    first_target = np.flatnonzero(visits == i0 + 1)
    init_end = int(first_target[0])
    parts["init"] = float(times[init_end])
    for q in range(len(visits) - 1):
        a, b = int(visits[q]), int(visits[q + 1])
        if b == a - 1 and 0 <= b <= i1:
            xi[b] += 1
    for q in range(init_end, len(visits) - 1):
        a, b = int(visits[q]), int(visits[q + 1])
        d = float(times[q + 1] - times[q])
        if b == a + 1 and a == i1:
            parts["right"] += d
        elif b == a + 1 and a > i0 and not crossed[a]:
            crossed[a] = True
            parts["dir"] += d
        elif min(a, b) > i0:
            parts["back"] += d
        else:
            parts["left"] += d
    b_total = int(xi[1:i1].sum()) if i1 > 1 else 0
    return HittingBreakdown(
        H_total=float(h_total),
        H_init=parts["init"],
        H_dir=parts["dir"],
        H_back=parts["back"],
        H_left=parts["left"],
        H_right=parts["right"],
        xi=tuple(int(c) for c in xi),
        B_total=b_total,
        theta1=float(theta1),
        theta2=float(theta2),
        visits=len(visits),
    )


def decompose_hitting(
    env: PotentialPath,
    valleys: ValleyDecomposition,
    v: float,
    cfg: SdeConfig,
    *,
    replicate: int = 0,
    table: ScaleTable | None = None,
) -> HittingBreakdown:
    """Run one diffusion path to ``v`` and split ``H(v)`` along the valley lattice.

    Visits of the lattice ``K_0 < ... < K_{i1} < K_{i1+1} = v`` are detected
    when the path crosses a lattice node (interpolated inside the step).
    """
    if abs(valleys.K[-1] - v) > 1e-9:
        raise ValueError("valleys were computed for a different v")
    tab = table if table is not None else scale_table(env)
    nodes = np.array([env.nearest_index(k) for k in valleys.K], dtype=np.int64)
    if nodes[0] <= 0:
        raise WindowError("lattice starts at the window edge", "left")
    j_lo = valleys.i0
    gen = rngmod.stream(cfg.seed, rngmod.DRIVING, replicate)
    size = 4096
    while True:
        v_buf, j_buf = np.empty(size), np.empty(size, np.int64)
        state = gen.bit_generator.state
        count, code, h, th1, th2 = _lattice_kernel(
            tab.ew, tab.slope, tab.width, env.origin, nodes, j_lo, cfg.dt, cfg.max_time, gen, v_buf, j_buf
        )
        if code != BUFFER_FULL:
            break
        gen.bit_generator.state = state
        size *= 8
    _check_code(code, "decompose_hitting")
    if code == TIME_CAP:
        raise BudgetExceeded(f"v={v} not reached before time {cfg.max_time}")
    return assemble_breakdown(v_buf[:count], j_buf[:count], valleys.i0, valleys.i1, h, th1, th2)
