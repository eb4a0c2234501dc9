import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwrelab import localtime as L
from rwrelab.processes import EXACT, SdeConfig


def _se(x):
    return x.std(ddof=1) / math.sqrt(x.size)


def test_occupation_identity_and_zero_level():
    path = L.simulate_brownian(40.0, 1e-4, 3)
    fixed = L.local_time_field(path, L.FixedTime(10.0))
    assert abs(fixed.integral() - 10.0) <= 0.02 * 10.0
    assert np.all(fixed.values >= 0)
    tau = L.local_time_field(path, L.InverseLocalTime(0.5))
    assert abs(tau.integral() - tau.elapsed) <= 0.02 * tau.elapsed
    assert abs(tau.at(0.0) - 0.5) <= 0.05 * 0.5
    hit = L.local_time_field(path, L.Passage(0.3))
    assert abs(hit.integral() - hit.elapsed) <= 0.02 * hit.elapsed


def test_stop_not_reached():
    path = L.simulate_brownian(0.01, 1e-4, 3)
    with pytest.raises(L.StopNotReached):
        L.local_time_field(path, L.Passage(5.0))
    with pytest.raises(L.StopNotReached):
        L.local_time_field(path, L.FixedTime(1.0))


def test_inverse_local_time_basics():
    path = L.simulate_brownian(50.0, 1e-4, 4)
    assert L.inverse_local_time(path, 0.0) == 0.0
    rs = [0.1, 0.2, 0.4, 0.8]
    taus = [L.inverse_local_time(path, r) for r in rs]
    assert all(a <= b for a, b in zip(taus, taus[1:]))


def test_inverse_local_time_laplace():
    tau = L.sample_inverse_local_time(1.0, SdeConfig(dt=1e-4, seed=5), 4000, t_max=100.0)
    e = np.exp(-0.5 * tau)
    assert abs(e.mean() - math.exp(-1.0)) < 3 * _se(e)


def test_first_kind_mean_profile():
    probes = [0.75, 0.5, 0.0]
    field = L.empirical_rayknight("first", 1.0, probes, SdeConfig(dt=1e-4, seed=6), 2000)
    for j, level in enumerate(probes):
        t = 1.0 - level
        assert abs(field[:, j].mean() - 2 * t) < 3 * _se(field[:, j])


def test_synthetic_fields():
    cfg = SdeConfig(dt=1e-2, scheme=EXACT, seed=7)
    f = L.rayknight_field("second", 1.0, cfg)
    assert f.at(0.0) == 1.0 and np.all(f.values >= 0)
    first = L.synthetic_rayknight("first", 1.0, [0.0], cfg, 4000)[:, 0]
    assert abs(first.mean() - 2.0) < 3 * _se(first)


def test_second_kind_synthetic_vs_empirical():
    from scipy import stats

    emp = L.empirical_rayknight("second", 1.0, [0.5], SdeConfig(dt=1e-4, seed=8), 2000)[:, 0]
    syn = L.synthetic_rayknight("second", 1.0, [0.5], SdeConfig(scheme=EXACT, seed=9), 2000)[:, 0]
    assert stats.ks_2samp(emp, syn).statistic < 0.05


def test_rayknight_argument_errors():
    with pytest.raises(ValueError):
        L.empirical_rayknight("third", 1.0, [0.1], SdeConfig(), 1)
    with pytest.raises(ValueError):
        L.empirical_rayknight("second", 1.0, [-0.1], SdeConfig(), 1)


def test_pitman_yor_closed_form():
    assert L.pitman_yor_laplace(0.7, 0.0) == 1.0
    assert abs(L.pitman_yor_laplace(0.5, 1.0) - math.exp(-0.5)) < 1e-15
    assert L.pitman_yor_laplace(0.5, -0.1) > 1.0
    with pytest.raises(ValueError):
        L.pitman_yor_laplace(0.5, -0.125)


@given(st.floats(0.05, 5.0), st.floats(-0.12, 10.0), st.floats(1e-3, 1.0))
def test_pitman_yor_decreasing_in_lambda(eta, lam, step):
    assert L.pitman_yor_laplace(eta, lam + step) < L.pitman_yor_laplace(eta, lam)


@given(st.floats(0.05, 5.0), st.floats(1e-3, 10.0), st.floats(1e-3, 1.0))
def test_pitman_yor_increasing_in_eta(eta, lam, step):
    assert L.pitman_yor_laplace(eta + step, lam) > L.pitman_yor_laplace(eta, lam)


def test_besq_deviation_bound():
    assert abs(L.besq_deviation_bound(1.0, 1.0) - 4 * math.sqrt(2) * math.exp(-1 / 16)) < 1e-12
    assert abs(L.besq_deviation_bound(1.0, 1.0) - 5.314) < 1e-3
    assert L.besq_deviation_bound(1.0, 1e-6) < 1e-10
    p, se = L.besq_deviation_frequency(2.0, 0.05, SdeConfig(dt=1e-4, seed=10), 10_000)
    assert p <= L.besq_deviation_bound(2.0, 0.05)
    with pytest.raises(ValueError):
        L.besq_deviation_bound(0.0, 1.0)


def test_local_time_ratio_trend():
    # sup over 0 < x < u of |L^x / r - 1| at tau_r shrinks as r grows
    probes = [0.05, 0.1, 0.15, 0.2]
    devs = []
    for r in (0.5, 4.0):
        f = L.empirical_rayknight("second", r, probes, SdeConfig(dt=1e-4, seed=11), 300)
        devs.append(float(np.mean(np.max(np.abs(f / r - 1.0), axis=1))))
    assert devs[1] < devs[0]
