"""Command-line front end.

Every subcommand accepts ``--config <json>`` (keys ``kappa, dt, dx, t, v, u,
nu, n, seed, env_seed, window`` plus a few subcommand-specific ones) and
``--seed``; flags given on the command line override the config file.
Results go to stdout as JSON, or to ``--out`` as CSV where a table makes
sense.

Exit codes: 0 success or passing suite, 1 runtime failure or failing suite,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings

import numpy as np

from . import tails
from .diffusion import BudgetExceeded, decompose_hitting, first_hitting, simulate_path
from .potential import WindowError, decompose_valleys, default_window, sample_potential
from .processes import SdeConfig
from .spectral import PotentialWeight, bobkov_bracket, principal_lambda

CONFIG_KEYS = {
    "kappa", "dt", "dx", "t", "v", "u", "nu", "n", "seed", "env_seed", "window",
    "event", "method", "convention", "workers", "mode", "us",
}


class ConfigError(ValueError):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _merge(args, defaults):
    """Command-line values over config values over ``defaults``."""
    cfg = dict(defaults)
    cfg.update(_load_config(args.config))
    for key, value in vars(args).items():
        if key in CONFIG_KEYS and value is not None:
            cfg[key] = value
    return cfg


def _need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing parameters: {', '.join(missing)}")


def _positive(cfg, *keys):
    for k in keys:
        if not (isinstance(cfg[k], (int, float)) and cfg[k] > 0):
            raise ConfigError(f"{k} must be positive")


def _choice(cfg, key, allowed):
    if cfg[key] not in allowed:
        raise ConfigError(f"{key} must be one of {', '.join(allowed)}")


def _window(cfg, kappa, reach):
    if cfg.get("window") is not None:
        w = cfg["window"]
        if not (isinstance(w, list) and len(w) == 2 and w[0] <= 0 <= w[1]):
            raise ConfigError("window must be [x_min, x_max] with x_min <= 0 <= x_max")
        return float(w[0]), float(w[1])
    return -max(20.0, 20.0 / kappa), max(1.25 * reach, reach + 5.0)


def _valley_window(cfg):
    """Window for a valley decomposition: ``[-floor(t) - 1, v + default_window + 5]`` unless given."""
    if cfg.get("window") is not None:
        return _window(cfg, cfg["kappa"], cfg["v"])
    return -math.floor(cfg["t"]) - 1.0, cfg["v"] + default_window(cfg["kappa"], cfg["t"]) + 5.0


def _emit(obj):
    print(json.dumps(obj, default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------
# subcommands


def cmd_sample_env(args):
    cfg = _merge(args, {"dx": 0.01, "seed": 0})
    _need(cfg, "kappa", "window")
    x_min, x_max = _window(cfg, cfg["kappa"], 0.0)
    env = sample_potential(cfg["kappa"], x_min, x_max, cfg["dx"], cfg["seed"])
    if args.out:
        env.to_csv(args.out)
    else:
        _emit({"kappa": env.kappa, "dx": env.dx, "x_min": env.x_min, "x_max": env.x_max, "seed": env.seed,
               "min": float(env.values.min()), "max": float(env.values.max()), "final": float(env.values[-1])})
    return 0


def cmd_valleys(args):
    cfg = _merge(args, {"dx": 0.01, "seed": 0})
    _need(cfg, "kappa", "t", "v")
    _positive(cfg, "kappa", "t", "v")
    x_min, x_max = _valley_window(cfg)
    env = sample_potential(cfg["kappa"], x_min, x_max, cfg["dx"], cfg.get("env_seed", cfg["seed"]))
    print(decompose_valleys(env, cfg["t"], cfg["v"]).to_json())
    return 0


def cmd_simulate(args):
    cfg = _merge(args, {"dx": 0.01, "dt": 1e-3, "seed": 0})
    _need(cfg, "kappa", "t")
    _positive(cfg, "kappa", "t", "dt")
    reach = cfg["kappa"] * cfg["t"] / 4.0 + 8.0 * math.sqrt(cfg["t"]) + 10.0
    x_min, x_max = _window(cfg, cfg["kappa"], reach)
    env = sample_potential(cfg["kappa"], x_min, x_max, cfg["dx"], cfg.get("env_seed", cfg["seed"]))
    path = simulate_path(env, cfg["t"], SdeConfig(dt=cfg["dt"], seed=cfg["seed"]), until=cfg.get("v"))
    if args.out:
        _write_rows(args.out, ["t", "x"], zip(path.times.tolist(), path.positions.tolist()))
    else:
        _emit({"T": float(path.times[-1]), "X_T": float(path.positions[-1]), "max": float(path.positions.max()),
               "hit_time": path.hit_time, "steps": int(path.raw_times.size)})
    return 0


def cmd_hitting(args):
    cfg = _merge(args, {"dx": 0.01, "dt": 1e-3, "seed": 0, "n": 1, "method": "rayknight"})
    _need(cfg, "kappa", "v")
    _positive(cfg, "kappa", "v", "n")
    _choice(cfg, "method", ("path", "rayknight"))
    decompose = cfg.get("t") is not None and cfg["n"] == 1 and cfg["method"] == "path"
    x_min, x_max = _valley_window(cfg) if decompose else _window(cfg, cfg["kappa"], cfg["v"])
    env = sample_potential(cfg["kappa"], x_min, x_max, cfg["dx"], cfg.get("env_seed", cfg["seed"]))
    sde = SdeConfig(dt=cfg["dt"], seed=cfg["seed"], workers=cfg.get("workers", 1))
    if decompose:
        b = decompose_hitting(env, decompose_valleys(env, cfg["t"], cfg["v"]), cfg["v"], sde)
        print(b.to_json())
        return 0
    h = first_hitting(env, cfg["v"], sde, int(cfg["n"]), method=cfg["method"])
    if args.out:
        _write_rows(args.out, ["H", "theta1", "theta2"], h.tolist())
    else:
        _emit({"H": h[:, 0], "theta1": h[:, 1], "theta2": h[:, 2]})
    return 0


def _us(cfg):
    us = cfg.get("us", cfg.get("u"))
    return [float(u) for u in np.atleast_1d(us)]


def cmd_tail_annealed(args):
    cfg = _merge(args, {"dx": 0.05, "dt": 1e-2, "seed": 0, "method": "rayknight", "convention": "terminal"})
    _need(cfg, "kappa", "t", "event", "n")
    if cfg.get("u") is None and cfg.get("us") is None:
        raise ConfigError("missing parameters: u")
    _positive(cfg, "kappa", "t", "n")
    _choice(cfg, "event", tails.ANNEALED_EVENTS)
    est = tails.estimate_tail_annealed_grid(
        cfg["kappa"], cfg["t"], _us(cfg), cfg["event"], int(cfg["n"]), cfg["seed"],
        v=cfg.get("v"), convention=cfg["convention"], method=cfg["method"], dt=cfg["dt"], dx=cfg["dx"],
        workers=cfg.get("workers", 1),
    )
    _report(est, args.out)
    return 0


def cmd_tail_quenched(args):
    cfg = _merge(args, {"dx": 0.05, "dt": 1e-2, "seed": 0, "env_seed": 0, "method": "rayknight", "convention": "sup"})
    _need(cfg, "kappa", "t", "event", "n")
    _positive(cfg, "kappa", "t", "n")
    _choice(cfg, "event", tails.QUENCHED_EVENTS)
    param = cfg.get("nu") if cfg["event"] != "speedup" else cfg.get("u")
    if param is None:
        raise ConfigError("missing parameters: " + ("u" if cfg["event"] == "speedup" else "nu"))
    window = tuple(cfg["window"]) if cfg.get("window") is not None else None
    est = tails.estimate_tail_quenched(
        cfg["env_seed"], cfg["kappa"], cfg["t"], param, cfg["event"], int(cfg["n"]), cfg["seed"],
        convention=cfg["convention"], method=cfg["method"], window=window, dt=cfg["dt"], dx=cfg["dx"],
        workers=cfg.get("workers", 1),
    )
    _report([est], args.out)
    return 0


def _report(estimates, out):
    if out:
        tails.estimates_to_csv(estimates, out)
    else:
        for e in estimates:
            print(e.to_json())


def cmd_fit(args):
    cfg = _merge(args, {"mode": "log_vs_log"})
    if args.input is None:
        raise ConfigError("fit needs --input <csv> with columns u,p_hat (or t,p_hat)")
    try:
        with open(args.input, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    if not rows:
        raise ConfigError("empty input")
    absc = "t" if cfg["mode"] == "loglog_vs_log" and "t" in rows[0] else "u"
    if absc not in rows[0] or "p_hat" not in rows[0]:
        raise ConfigError(f"input needs columns {absc},p_hat")
    points = [(float(r[absc]), float(r["p_hat"])) for r in rows]
    try:
        fit = tails.fit_exponent(points, cfg["mode"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(fit.to_json())
    return 0


def cmd_constants(args):
    cfg = _merge(args, {})
    _need(cfg, "kappa")
    try:
        out = tails.constants(cfg["kappa"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.get("nu") is not None:
        out["predicted"] = tails.predicted_exponents(cfg["kappa"], cfg["nu"])
    _emit(out)
    return 0


# --------------------------------------------------------------------------
# verification suites (reduced versions of the acceptance checks)


def _suite_identities(seed):
    """Occupation split and valley split of ``H(v)`` on annealed paths."""
    from .diffusion import annealed_environment

    ok = True
    kappa, t, dt = 0.5, 200.0, 0.1
    v = math.sqrt(t)
    for s in range(10):
        env = annealed_environment((kappa, -math.floor(t) - 5.0, v + default_window(kappa, t) + 5.0, 0.05), seed, s)
        valleys = decompose_valleys(env, t, v)
        b = decompose_hitting(env, valleys, v, SdeConfig(dt=dt, seed=seed), replicate=s)
        theta_err = abs(b.theta1 + b.theta2 - b.H_total)
        parts_err = abs(b.parts_sum - b.H_total)
        ok &= theta_err <= dt and parts_err <= dt
    return ok


def _suite_constants(seed):
    ok = True
    for k in (0.3, 0.5, 0.7):
        c = tails.constants(k)
        ok &= c["max_rel_gap"] < 1e-6
    ok &= abs(tails.constants(0.5)["c_kappa"] - 0.5) < 1e-12
    ok &= abs(tails.predicted_exponents(0.5, 0.25)["quenched_slowdown_doublelog"] - 1 / 3) < 1e-15
    return ok


def _suite_spectral(seed):
    ok = abs(principal_lambda(PotentialWeight.from_function(lambda x: 1.0)) - math.pi**2 / 4) < 1e-6
    gen = np.random.default_rng(seed)
    for _ in range(20):
        V = PotentialWeight.piecewise_constant(gen.exponential(size=8), per_piece=100)
        br = bobkov_bracket(V)
        ok &= br.lower_ok and br.upper_ok
    return ok


def _suite_reproducibility(seed):
    sde1 = SdeConfig(dt=0.05, seed=seed, workers=1)
    sde4 = SdeConfig(dt=0.05, seed=seed, workers=4)
    win = (0.5, -20.0, 15.0, 0.05)
    a = first_hitting(None, 5.0, sde1, 16, method="rayknight", annealed=win)
    b = first_hitting(None, 5.0, sde4, 16, method="rayknight", annealed=win)
    return bool(np.array_equal(a, b))


SUITES = {
    "identities": _suite_identities,
    "constants": _suite_constants,
    "spectral": _suite_spectral,
    "reproducibility": _suite_reproducibility,
}


def cmd_verify(args):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    seed = args.seed if args.seed is not None else 0
    results = {}
    for name in names:
        results[name] = bool(SUITES[name](seed))
        print(f"{'PASS' if results[name] else 'FAIL'} {name}")
    return 0 if all(results.values()) else 1


# --------------------------------------------------------------------------


def _common(p, *keys):
    p.add_argument("--config", help="JSON file with parameters")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write CSV here instead of JSON to stdout")
    types = {"kappa": float, "dt": float, "dx": float, "t": float, "v": float, "u": float, "nu": float,
             "n": int, "env_seed": int, "workers": int}
    for k in keys:
        if k in types:
            p.add_argument(f"--{k.replace('_', '-')}", dest=k, type=types[k])
        elif k == "window":
            p.add_argument("--window", type=float, nargs=2, metavar=("X_MIN", "X_MAX"))
        elif k == "us":
            p.add_argument("--us", type=float, nargs="+", help="grid of u values")
        else:
            p.add_argument(f"--{k}", dest=k)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwrelab", description="Diffusions in a drifted Brownian potential.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "sample-env": (cmd_sample_env, ("kappa", "dx", "window")),
        "valleys": (cmd_valleys, ("kappa", "dx", "t", "v", "env_seed", "window")),
        "simulate": (cmd_simulate, ("kappa", "dx", "dt", "t", "v", "env_seed", "window")),
        "hitting": (cmd_hitting, ("kappa", "dx", "dt", "t", "v", "n", "env_seed", "window", "method", "workers")),
        "tail-annealed": (cmd_tail_annealed, ("kappa", "dx", "dt", "t", "v", "u", "us", "n", "event", "method",
                                              "convention", "workers")),
        "tail-quenched": (cmd_tail_quenched, ("kappa", "dx", "dt", "t", "u", "nu", "n", "env_seed", "window",
                                              "event", "method", "convention", "workers")),
        "fit": (cmd_fit, ("mode",)),
        "constants": (cmd_constants, ("kappa", "nu")),
    }
    for name, (fn, keys) in specs.items():
        p = sub.add_parser(name)
        _common(p, *keys)
        p.set_defaults(func=fn)
        if name == "fit":
            p.add_argument("--input", help="CSV with columns u,p_hat (or t,p_hat)")
    p = sub.add_parser("verify")
    p.add_argument("suite", choices=sorted(SUITES) + ["all"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", tails.RegimeWarning)
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (WindowError, BudgetExceeded, RuntimeError, FloatingPointError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
