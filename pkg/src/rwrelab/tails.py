"""Deviation probabilities of the diffusion, exponent fits and reference constants.

Annealed estimates draw a fresh environment for every replicate; quenched
estimates keep one environment (``env_seed``) and vary only the driving
noise. Events on the hitting time are decided from one hitting-time sample
per replicate, so a whole grid of thresholds shares the same replicates.

Engines for hitting times:

``rayknight``
    exact-in-law sampler through the local-time field of the driving
    motion; cost independent of the size of ``H``.
``path``
    time-changed Brownian motion run until the passage (or the largest
    threshold of the grid, after which every event is already decided).
``representation``
    annealed only: ``4 int_0^v Z + 16 Upsilon`` from the auxiliary
    diffusion and an independent Bessel passage.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .diffusion import first_hitting, position_at
from .potential import WindowError, sample_potential, scale_table
from .processes import SdeConfig, stable_constant, theta_from_xi

ANNEALED_EVENTS = ("speedup_X", "slowdown_X", "speedup_H", "slowdown_H")
QUENCHED_EVENTS = ("speedup", "slowdown_H", "slowdown_X")
CONVENTIONS = ("terminal", "sup")
QUENCHED_WIDENINGS = 6
CSV_COLUMNS = ("event", "kappa", "t", "u", "n", "p_hat", "se", "seed", "env_seed")


class RegimeWarning(UserWarning):
    """Parameters sit outside the asymptotic regime of the limit being probed."""


@dataclass(frozen=True)
class TailEstimate:
    event: str
    kappa: float
    t: float
    u: float
    n: int
    p_hat: float
    se: float
    seed: int
    env_seed: int | None
    successes: int
    threshold: float
    upper95: float | None = None
    method: str = ""
    convention: str = ""
    regime: dict = field(default_factory=dict)

    @classmethod
    def from_count(cls, successes: int, n: int, **kw) -> "TailEstimate":
        if n <= 0:
            raise ValueError("n must be positive")
        p = successes / n
        se = math.sqrt(p * (1.0 - p) / n)
        upper = 3.0 / n if successes == 0 else None
        return cls(successes=int(successes), n=int(n), p_hat=p, se=se, upper95=upper, **kw)

    def csv_row(self) -> list:
        return [self.event, self.kappa, self.t, self.u, self.n, repr(self.p_hat), repr(self.se), self.seed,
                "" if self.env_seed is None else self.env_seed]

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def estimates_to_csv(estimates, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for e in estimates:
        w.writerow(e.csv_row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


# --------------------------------------------------------------------------
# regime flags


def _annealed_regime(kappa, t, u, event, v):
    flags = {}
    if event in ("speedup_X", "speedup_H"):
        scale = t if event == "speedup_X" else v
        flags["u_over_scale_power"] = u / scale ** (1.0 - kappa) if kappa < 1 else math.inf
        flags["ok"] = kappa < 1 and flags["u_over_scale_power"] < 1.0
    else:
        scale = t**kappa if event == "slowdown_X" else v
        flags["log_u_over_scale"] = math.log(max(u, 1.0)) / scale
        flags["ok"] = kappa < 1 and flags["log_u_over_scale"] < 1.0
    return flags


def _warn_regime(flags, what):
    if not flags.get("ok", True):
        warnings.warn(f"{what}: outside the asymptotic regime {flags}", RegimeWarning, stacklevel=3)


# --------------------------------------------------------------------------
# hitting-time samples


def _default_window(kappa, reach, dx):
    left = -max(20.0, 20.0 / max(kappa, 0.05))
    return (kappa, left, max(reach * 1.25, reach + 5.0), dx)


def _hitting_samples(v, cfg, n, method, *, env=None, window=None):
    if method == "representation":
        if env is not None:
            raise ValueError("the representation engine is annealed only")
        theta = theta_from_xi(window[0], v, cfg, n)
        return theta.sum(axis=1)
    return first_hitting(env, v, cfg, n, method=method, annealed=window)[:, 0]


def _event_counts(samples, thresholds, below: bool):
    samples = np.asarray(samples)
    if below:
        return [int(np.count_nonzero(samples < th)) for th in thresholds]
    return [int(np.count_nonzero(samples > th)) for th in thresholds]


def estimate_tail_annealed_grid(
    kappa: float,
    t: float,
    us,
    event: str,
    n: int,
    seed: int,
    *,
    v: float | None = None,
    convention: str = "terminal",
    method: str = "rayknight",
    dt: float = 1e-2,
    dx: float = 0.05,
    workers: int = 1,
    calibration: bool = False,
) -> list[TailEstimate]:
    """Annealed estimates on a grid of ``u`` sharing the same replicates.

    Events and thresholds:

    * ``speedup_X``: ``X_t > t^kappa u``; ``slowdown_X``: ``X_t < t^kappa / u``.
      ``convention="sup"`` replaces ``X_t`` by ``max_{s<=t} X_s``, decided
      through the hitting time of the level.
    * ``speedup_H``: ``H(v) < (v/u)^(1/kappa)``; ``slowdown_H``:
      ``H(v) > (v u)^(1/kappa)``, with ``v = t^kappa`` unless given.

    ``calibration=True`` switches the environment noise off (pure drift).
    """
    if event not in ANNEALED_EVENTS:
        raise ValueError(f"unknown event {event!r}")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if n <= 0:
        raise ValueError("n must be positive")
    us = [float(u) for u in np.atleast_1d(us)]
    if v is None:
        v = t**kappa
    common = dict(kappa=kappa, t=t, seed=seed, env_seed=None, method=method)
    cfg = SdeConfig(dt=dt, seed=seed, workers=workers)

    if event in ("speedup_H", "slowdown_H"):
        return estimate_hitting_tails(
            kappa, v, us, n, seed, t=t, method=method, dt=dt, dx=dx, workers=workers, calibration=calibration,
            events=(event,),
        )[event]
    levels = [t**kappa * u if event == "speedup_X" else t**kappa / u for u in us]
    above = event == "speedup_X"
    if convention == "terminal":
        window = _window(kappa, max(max(levels), t**kappa + 6.0 * math.sqrt(t)), dx, calibration)
        x = position_at(None, t, cfg, n, annealed=window)[:, 0]
        counts = [int(np.count_nonzero(x > lv)) if above else int(np.count_nonzero(x < lv)) for lv in levels]
    else:
        counts = []
        engine = "path" if method == "path" else "rayknight"
        for lv in levels:
            if lv <= 0.0:
                # the running maximum starts at X_0 = 0
                counts.append(n if above else 0)
                continue
            window = _window(kappa, lv, dx, calibration)
            if engine == "path":
                cfg = SdeConfig(dt=dt, seed=seed, workers=workers, max_time=t * (1.0 + 1e-9))
            h = _hitting_samples(lv, cfg, n, engine, window=window)
            counts.append(int(np.count_nonzero(h <= t)) if above else int(np.count_nonzero(h > t)))

    out = []
    for u, lv, c in zip(us, levels, counts):
        flags = _annealed_regime(kappa, t, u, event, v)
        _warn_regime(flags, event)
        out.append(
            TailEstimate.from_count(c, n, event=event, u=u, threshold=lv, convention=convention, regime=flags, **common)
        )
    return out


def estimate_hitting_tails(
    kappa: float,
    v: float,
    us,
    n: int,
    seed: int,
    *,
    t: float | None = None,
    events=("speedup_H", "slowdown_H"),
    method: str = "rayknight",
    dt: float = 1e-2,
    dx: float = 0.05,
    workers: int = 1,
    calibration: bool = False,
) -> dict[str, list[TailEstimate]]:
    """Annealed ``speedup_H`` and ``slowdown_H`` estimates from one set of ``H(v)`` samples.

    ``t`` is only recorded in the estimates; it defaults to ``v^(1/kappa)``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    for event in events:
        if event not in ("speedup_H", "slowdown_H"):
            raise ValueError(f"unknown hitting event {event!r}")
    us = [float(u) for u in np.atleast_1d(us)]
    if t is None:
        t = v ** (1.0 / kappa)
    ths = {
        "speedup_H": [(v / u) ** (1.0 / kappa) for u in us],
        "slowdown_H": [(v * u) ** (1.0 / kappa) for u in us],
    }
    cfg = SdeConfig(dt=dt, seed=seed, workers=workers)
    if method == "path":
        # every event is decided once the largest threshold has passed
        cap = max(max(ths[e]) for e in events)
        cfg = SdeConfig(dt=dt, seed=seed, workers=workers, max_time=cap * (1.0 + 1e-9))
    h = _hitting_samples(v, cfg, n, method, window=_window(kappa, v, dx, calibration))
    out = {}
    for event in events:
        below = event == "speedup_H"
        counts = _event_counts(h, ths[event], below)
        rows = []
        for u, th, c in zip(us, ths[event], counts):
            flags = _annealed_regime(kappa, t, u, event, v)
            _warn_regime(flags, event)
            rows.append(
                TailEstimate.from_count(
                    c, n, event=event, kappa=kappa, t=t, u=u, seed=seed, env_seed=None, threshold=th,
                    method=method, convention="hitting", regime=flags,
                )
            )
        out[event] = rows
    return out


def _window(kappa, reach, dx, calibration):
    return _default_window(kappa, reach, dx) + (not calibration,)


def estimate_tail_annealed(kappa: float, t: float, u: float, event: str, n: int, seed: int, **kw) -> TailEstimate:
    """Single-threshold form of :func:`estimate_tail_annealed_grid`."""
    return estimate_tail_annealed_grid(kappa, t, [u], event, n, seed, **kw)[0]


# --------------------------------------------------------------------------
# quenched


def quenched_environment(env_seed: int, kappa: float, window: tuple[float, float], dx: float):
    return sample_potential(kappa, window[0], window[1], dx, env_seed)


def estimate_tail_quenched(
    env_seed: int,
    kappa: float,
    t: float,
    u_or_nu: float,
    event: str,
    n: int,
    seed: int,
    *,
    convention: str = "sup",
    method: str = "rayknight",
    window: tuple[float, float] | None = None,
    dt: float = 1e-2,
    dx: float = 0.05,
    workers: int = 1,
) -> TailEstimate:
    """Probability under one fixed environment.

    * ``speedup`` (``u``): ``X_t > t^kappa u``;
    * ``slowdown_H`` (``nu``): ``H(t^nu) > t``;
    * ``slowdown_X`` (``nu``): ``X_t < t^nu``.

    ``convention="sup"`` uses the running maximum (through ``H``);
    ``"terminal"`` simulates the path to time ``t``. The environment window
    defaults to ``[-40/kappa, 2 level + 20]`` and raises ``WindowError``
    when the level lies outside it. If a replicate runs into an edge of the
    window that edge is pushed out and the estimate recomputed.
    """
    if event not in QUENCHED_EVENTS:
        raise ValueError(f"unknown event {event!r}")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if n <= 0:
        raise ValueError("n must be positive")
    if event == "speedup":
        level = t**kappa * u_or_nu
        flags = {"u_over_scale_power": u_or_nu / t ** (1.0 - kappa) if kappa < 1 else math.inf}
        flags["ok"] = kappa < 1 and flags["u_over_scale_power"] < 1.0
    else:
        nu = u_or_nu
        level = t**nu
        flags = {"nu": nu, "ok": 0.0 < nu < min(1.0, kappa)}
    _warn_regime(flags, event)
    if window is None:
        window = (-40.0 / max(kappa, 0.05), 2.0 * level + 20.0)
    if not window[0] <= 0.0 < level <= window[1]:
        raise WindowError(f"level {level} outside the environment window {window}", "right")
    lo, hi = window
    for _ in range(QUENCHED_WIDENINGS + 1):
        try:
            count, conv = _quenched_count(env_seed, kappa, t, level, event, n, seed, convention, method,
                                          (lo, hi), dt, dx, workers)
            break
        except WindowError as exc:
            # the environment is drawn outward from 0 on each side, so a wider
            # window keeps the part already used and only adds room
            if exc.side == "left":
                lo *= 2.0
            elif exc.side == "right":
                hi *= 2.0
            else:
                raise
    else:
        raise WindowError(f"{event}: environment window still exceeded at [{lo}, {hi}]", exc.side)
    return TailEstimate.from_count(
        count, n, event=event, kappa=kappa, t=t, u=u_or_nu, seed=seed, env_seed=env_seed,
        threshold=level, method=method, convention=conv, regime=flags,
    )


def _quenched_count(env_seed, kappa, t, level, event, n, seed, convention, method, window, dt, dx, workers):
    env = quenched_environment(env_seed, kappa, window, dx)
    table = scale_table(env)
    above = event == "speedup"
    if convention == "sup" or event == "slowdown_H":
        cfg = SdeConfig(dt=dt, seed=seed, workers=workers, max_time=t * (1.0 + 1e-9))
        h = first_hitting(env, level, cfg, n, method=method, table=table)[:, 0]
        count = int(np.count_nonzero(h <= t)) if above else int(np.count_nonzero(h > t))
        return count, ("sup" if event != "slowdown_H" else "hitting")
    cfg = SdeConfig(dt=dt, seed=seed, workers=workers)
    x = position_at(env, t, cfg, n)[:, 0]
    count = int(np.count_nonzero(x > level)) if above else int(np.count_nonzero(x < level))
    return count, "terminal"


# --------------------------------------------------------------------------
# exponent fits


FIT_MODES = ("log_vs_log", "loglog_vs_log", "power")


@dataclass(frozen=True)
class ExponentFit:
    mode: str
    x: tuple[float, ...]
    y: tuple[float, ...]
    slope: float
    intercept: float
    r2: float
    rejected: tuple[float, ...] = ()

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def fit_exponent(points, mode: str = "log_vs_log") -> ExponentFit:
    """Least-squares line through transformed ``(abscissa, p_hat)`` points.

    ``log_vs_log``: ``log(-log p)`` against ``log u``;
    ``loglog_vs_log``: ``log(-log p)`` against ``log t`` (abscissa is ``t``);
    ``power``: ``log p`` against ``log u``.
    Points with ``p`` equal to 0 or 1 are dropped with a warning.
    """
    if mode not in FIT_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    pts = [(float(a), float(p)) for a, p in points]
    keep = [(a, p) for a, p in pts if 0.0 < p < 1.0 and a > 0.0]
    dropped = tuple(a for a, p in pts if not (0.0 < p < 1.0 and a > 0.0))
    if dropped:
        warnings.warn(f"fit_exponent: dropped points at {dropped} (p outside (0, 1))", RuntimeWarning, stacklevel=2)
    if len(keep) < 3:
        raise ValueError("need at least 3 points with p in (0, 1)")
    a = np.array([k[0] for k in keep])
    p = np.array([k[1] for k in keep])
    x = np.log(a)
    y = np.log(p) if mode == "power" else np.log(-np.log(p))
    res = np.polynomial.polynomial.Polynomial.fit(x, y, 1).convert()
    intercept, slope = float(res.coef[0]), float(res.coef[1]) if res.coef.size > 1 else 0.0
    fitted = intercept + slope * x
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(mode, tuple(x.tolist()), tuple(y.tolist()), slope, intercept, r2, dropped)


# --------------------------------------------------------------------------
# predictions and constants


def predicted_exponents(kappa: float, nu: float | None = None) -> dict:
    """Exponents of the limit laws.

    ``speedup_exponent = 1/(1-kappa)`` (for ``kappa < 1``),
    ``annealed_slowdown_power = 1``, and for ``0 < nu <= min(1, kappa)``
    ``quenched_slowdown_doublelog = min(1 - nu/kappa, kappa/(kappa+1))``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    out = {
        "kappa": kappa,
        "speedup_exponent": 1.0 / (1.0 - kappa) if kappa < 1 else None,
        "annealed_slowdown_power": 1.0,
    }
    if nu is not None:
        if not 0.0 < nu <= min(1.0, kappa):
            raise ValueError("nu must lie in (0, min(1, kappa)]")
        out["nu"] = nu
        out["quenched_slowdown_doublelog"] = min(1.0 - nu / kappa, kappa / (kappa + 1.0))
    return out


def _f_log(u: float, kappa: float) -> float:
    """Scale function of the auxiliary diffusion at ``z = e^u``: ``int_0^u (1 + e^w)^kappa dw``."""
    val, _ = integrate.quad(lambda w: math.exp(kappa * np.logaddexp(0.0, w)), 0.0, u, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _f_inverse_log(x: float, kappa: float) -> float:
    """``log f^{-1}(x)``."""
    if x == 0.0:
        return 0.0
    lo, hi = (0.0, 1.0) if x > 0 else (-1.0, 0.0)
    while (_f_log(hi, kappa) - x) < 0:
        hi *= 2.0
    while (_f_log(lo, kappa) - x) > 0:
        lo *= 2.0
    return optimize.brentq(lambda u: _f_log(u, kappa) - x, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=400)


def h_density(x: float, kappa: float) -> float:
    """``h(x) = z / (1 + z)^(1 + 2 kappa)`` with ``z = f^{-1}(x)``."""
    u = _f_inverse_log(x, kappa)
    return math.exp(u - (1.0 + 2.0 * kappa) * np.logaddexp(0.0, u))


def constants(kappa: float) -> dict:
    """``c_kappa`` and the integrals of ``h`` by quadrature and by substitution.

    Substituting ``x = f(z)`` turns ``h(x) dx`` into ``(1 + z)^(-1-kappa) dz``,
    so the half line gives ``2^-kappa / kappa`` and the full line ``1 / kappa``.
    The quadrature route integrates ``h`` in ``x`` with a numerical inverse
    of ``f``.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    half_q, _ = integrate.quad(h_density, 0.0, np.inf, args=(kappa,), epsabs=0.0, epsrel=1e-10, limit=400)
    neg_q, _ = integrate.quad(h_density, -np.inf, 0.0, args=(kappa,), epsabs=0.0, epsrel=1e-10, limit=400)
    half_a = 2.0**-kappa / kappa
    full_a = 1.0 / kappa
    c_kappa = stable_constant(kappa)
    return {
        "kappa": kappa,
        "c_kappa": c_kappa,
        "c_kappa_gamma_form": float(math.pi / (2 * kappa * math.sin(math.pi * kappa)) * (kappa**kappa / special.gamma(kappa)) ** 2),
        "c_h_halfline": half_a,
        "c_h_fullline": full_a,
        "c_h_halfline_quadrature": half_q,
        "c_h_fullline_quadrature": half_q + neg_q,
        "max_rel_gap": max(abs(half_q - half_a) / half_a, abs(half_q + neg_q - full_a) / full_a),
    }


__all__ = [
    "ExponentFit",
    "RegimeWarning",
    "TailEstimate",
    "constants",
    "estimate_tail_annealed",
    "estimate_tail_annealed_grid",
    "estimate_hitting_tails",
    "estimate_tail_quenched",
    "estimates_to_csv",
    "fit_exponent",
    "h_density",
    "predicted_exponents",
]
