import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwrelab import tails as T
from rwrelab.potential import WindowError


def test_tail_estimate_fields():
    e = T.TailEstimate.from_count(25, 100, event="speedup_H", kappa=0.5, t=1.0, u=2.0, seed=1, env_seed=None,
                                  threshold=1.0)
    assert e.p_hat == 0.25 and abs(e.se - math.sqrt(0.25 * 0.75 / 100)) < 1e-15 and e.upper95 is None
    z = T.TailEstimate.from_count(0, 1000, event="speedup_H", kappa=0.5, t=1.0, u=2.0, seed=1, env_seed=None,
                                  threshold=1.0)
    assert z.p_hat == 0.0 and z.upper95 == 3e-3
    with pytest.raises(ValueError):
        T.TailEstimate.from_count(0, 0, event="x", kappa=0.5, t=1.0, u=1.0, seed=0, env_seed=None, threshold=0.0)
    text = T.estimates_to_csv([e])
    assert text.splitlines()[0] == "event,kappa,t,u,n,p_hat,se,seed,env_seed"


def test_annealed_errors():
    with pytest.raises(ValueError):
        T.estimate_tail_annealed(0.5, 10.0, 2.0, "speedup_X", 0, 1)
    with pytest.raises(ValueError):
        T.estimate_tail_annealed(0.5, 10.0, 2.0, "nonsense", 10, 1)


def test_annealed_level_zero_sup_convention():
    e = T.estimate_tail_annealed_grid(0.5, 10.0, [0.0], "speedup_X", 50, 1, convention="sup")[0]
    assert e.p_hat == 1.0


def test_annealed_regime_warning():
    with pytest.warns(T.RegimeWarning):
        T.estimate_tail_annealed(0.5, 4.0, 8.0, "speedup_H", 20, 1)


def test_calibration_flat_gaussian():
    # pure drift, kappa = 1: X_4 ~ N(1, 4), so P(X_4 > 3) = 1 - Phi(1)
    e = T.estimate_tail_annealed(1.0, 4.0, 0.75, "speedup_X", 10_000, 3, dt=1e-3, dx=0.01, calibration=True)
    assert e.threshold == 3.0
    assert abs(e.p_hat - 0.158655) < 3 * math.sqrt(0.158655 * (1 - 0.158655) / e.n)


def test_slowdown_x_flatness_sup_convention():
    est = T.estimate_tail_annealed_grid(0.5, 400.0, [2.0, 4.0, 8.0], "slowdown_X", 2000, 4, convention="sup")
    up = [e.u * e.p_hat for e in est]
    assert min(up) > 0 and max(up) / min(up) < 2.0


def test_hitting_grid_shares_samples():
    a = T.estimate_hitting_tails(0.5, 20.0, [2.0, 3.0], 400, 5)
    b = T.estimate_tail_annealed_grid(0.5, 1600.0, [2.0, 3.0], "slowdown_H", 400, 5, v=20.0)
    assert [e.p_hat for e in a["slowdown_H"]] == [e.p_hat for e in b]
    assert a["speedup_H"][0].p_hat >= a["speedup_H"][1].p_hat


def test_quenched_reproducible_across_workers():
    ref = T.estimate_tail_quenched(2, 0.5, 300.0, 0.25, "slowdown_H", 200, 7)
    for w in (4, 16):
        other = T.estimate_tail_quenched(2, 0.5, 300.0, 0.25, "slowdown_H", 200, 7, workers=w)
        assert other.p_hat == ref.p_hat and other.successes == ref.successes


def test_quenched_window_error():
    with pytest.raises(WindowError):
        T.estimate_tail_quenched(0, 0.5, 1e4, 0.5, "slowdown_H", 10, 1, window=(-80.0, 50.0))


def test_quenched_slowdown_decreasing_in_t():
    p3 = T.estimate_tail_quenched(0, 0.5, 1e3, 0.25, "slowdown_H", 2000, 8).p_hat
    p4 = T.estimate_tail_quenched(0, 0.5, 1e4, 0.25, "slowdown_H", 2000, 8).p_hat
    assert 0 < p4 < p3 < 1


def test_quenched_speedup_and_terminal():
    e = T.estimate_tail_quenched(1, 0.5, 100.0, 0.5, "speedup", 300, 9)
    f = T.estimate_tail_quenched(1, 0.5, 100.0, 0.5, "speedup", 300, 9, convention="terminal", dt=2e-2)
    assert 0 <= f.p_hat <= e.p_hat <= 1  # X_t never exceeds its running maximum in law


# ---- fits


def test_fit_exact_power_laws():
    us = [1.0, 2.0, 3.0]
    fit = T.fit_exponent([(u, math.exp(-2 * u * u)) for u in us], "log_vs_log")
    assert abs(fit.slope - 2.0) < 1e-12 and abs(fit.r2 - 1.0) < 1e-12
    fit = T.fit_exponent([(u, 0.3 / u) for u in (2.0, 4.0, 8.0)], "power")
    assert abs(fit.slope + 1.0) < 1e-12
    fit = T.fit_exponent([(t, math.exp(-(t ** (1 / 3)))) for t in (1e2, 1e3, 1e4)], "loglog_vs_log")
    assert abs(fit.slope - 1 / 3) < 1e-12


def test_fit_rejects_boundary_points():
    pts = [(1.0, 0.5), (2.0, 0.2), (3.0, 0.05), (4.0, 0.0)]
    with pytest.warns(RuntimeWarning):
        fit = T.fit_exponent(pts)
    assert fit.rejected == (4.0,)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            T.fit_exponent([(1.0, 0.5), (2.0, 1.0), (3.0, 0.0)])
    with pytest.raises(ValueError):
        T.fit_exponent(pts[:3], "bogus")


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_fit_recovers_slope(a, c):
    fit = T.fit_exponent([(u, math.exp(-c * u**a)) for u in (1.5, 2.0, 3.0)])
    assert abs(fit.slope - a) < 1e-8


# ---- predictions and constants


def test_predicted_exponents():
    assert abs(T.predicted_exponents(0.5, 0.25)["quenched_slowdown_doublelog"] - 1 / 3) < 1e-15
    assert abs(T.predicted_exponents(2.0, 1.0)["quenched_slowdown_doublelog"] - 0.5) < 1e-15
    assert T.predicted_exponents(0.5)["speedup_exponent"] == 2.0
    assert T.predicted_exponents(0.5)["annealed_slowdown_power"] == 1.0
    with pytest.raises(ValueError):
        T.predicted_exponents(0.5, 0.7)


@given(st.floats(0.05, 3.0), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_predicted_monotone_in_nu(kappa, a, b):
    top = min(1.0, kappa)
    n1, n2 = sorted((a * top, b * top))
    p1 = T.predicted_exponents(kappa, n1)["quenched_slowdown_doublelog"]
    p2 = T.predicted_exponents(kappa, n2)["quenched_slowdown_doublelog"]
    assert p2 <= p1


@pytest.mark.parametrize("kappa", [0.3, 0.5, 0.7])
def test_constants_dual_route(kappa):
    c = T.constants(kappa)
    assert abs(c["c_h_halfline_quadrature"] - c["c_h_halfline"]) <= 1e-6 * c["c_h_halfline"]
    assert abs(c["c_h_fullline_quadrature"] - c["c_h_fullline"]) <= 1e-6 * c["c_h_fullline"]
    assert abs(c["c_kappa"] - c["c_kappa_gamma_form"]) <= 1e-12


def test_constants_values():
    c = T.constants(0.5)
    assert abs(c["c_kappa"] - 0.5) < 1e-15
    assert c["c_h_fullline"] == 2.0 and abs(c["c_h_halfline"] - math.sqrt(2)) < 1e-15
    with pytest.raises(ValueError):
        T.constants(1.0)
