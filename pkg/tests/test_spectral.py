import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rwrelab.diffusion import exit_time
from rwrelab.potential import PotentialPath, sample_potential
from rwrelab.processes import SdeConfig
from rwrelab.spectral import PotentialWeight, bobkov_bracket, exit_laplace_bound, principal_lambda


def _const(c):
    return PotentialWeight.from_function(lambda x: np.full_like(x, c))


def test_principal_lambda_constant_weights():
    assert abs(principal_lambda(_const(1.0)) - math.pi**2 / 4) < 1e-6
    assert abs(principal_lambda(_const(4.0)) - math.pi**2 / 16) < 1e-6
    assert math.isinf(principal_lambda(_const(0.0)))


@pytest.mark.parametrize("c", [0.5, 2.0, 4.0])
def test_principal_lambda_scaling(c):
    V = PotentialWeight.piecewise_constant([0.3, 2.0, 1.1, 0.7])
    lam = principal_lambda(V)
    assert abs(principal_lambda(V.scaled(c)) * c - lam) <= 1e-6 * lam


def test_bracket_constant_weight():
    br = bobkov_bracket(_const(1.0))
    assert abs(br.S - 0.25) < 1e-6
    assert abs(br.inverse_lambda - 4 / math.pi**2) < 1e-6
    assert br.lower_ok and br.upper_ok


@given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=10).filter(lambda v: max(v) > 1e-3))
def test_bracket_random_step_weights(levels):
    br = bobkov_bracket(PotentialWeight.piecewise_constant(levels, per_piece=100))
    assert br.lower_ok and br.upper_ok


@pytest.mark.parametrize("center", [0.1, 0.5, 0.95])
def test_bracket_narrow_bump(center):
    V = PotentialWeight.from_function(lambda x: 1e3 * np.exp(-(((x - center) / 2e-3) ** 2)), n=20_001)
    br = bobkov_bracket(V)
    assert br.lower_ok and br.upper_ok


def test_cumulative_nondecreasing():
    V = PotentialWeight.piecewise_constant([0.0, 3.0, 0.0, 1.0])
    assert np.all(np.diff(V.cumulative) >= 0)
    with pytest.raises(ValueError):
        PotentialWeight(np.array([0.0, 1.0]), np.array([1.0, -1.0]))


def _flat(x_min, x_max, dx):
    n = int(round((x_max - x_min) / dx)) + 1
    return PotentialPath(kappa=0.0, x_min=x_min, dx=dx, values=np.zeros(n), seed=0)


def test_exit_bound_flat():
    env = _flat(-1.0, 2.0, 0.01)
    eb = exit_laplace_bound(env, 0.0, 1.0)
    assert eb.D_plus == 0.0 and eb.M == 0.0
    assert abs(eb.lambda_star - 1 / 64) < 1e-15 and eb.bound == 2.0 and eb.certified
    # Markov tail bound decays in u
    tails = [eb.bound * math.exp(-eb.lambda_star * u) for u in (1.0, 10.0, 100.0)]
    assert tails[0] > tails[1] > tails[2]


def test_exit_bound_flat_monte_carlo():
    env = _flat(-1.0, 2.0, 0.01)
    eb = exit_laplace_bound(env, 0.0, 1.0)
    T = exit_time(env, 0.0, 1.0, 0.5, SdeConfig(dt=1e-3, seed=4), 10_000)[:, 0]
    w = np.exp(eb.lambda_star * T)
    assert w.mean() <= eb.bound + 3 * w.std(ddof=1) / math.sqrt(w.size)
    # mean exit time from the middle of [0, 1] is 1/4; discrete monitoring
    # overshoots by O(sqrt(dt)), so the error must shrink with dt
    coarse = exit_time(env, 0.0, 1.0, 0.5, SdeConfig(dt=1.6e-2, seed=4), 10_000)[:, 0]
    assert abs(T.mean() - 0.25) < abs(coarse.mean() - 0.25)


def test_exit_bound_degenerate_and_errors():
    env = sample_potential(0.5, -2.0, 2.0, 0.01, 0)
    eb = exit_laplace_bound(env, 0.5, 0.5)
    assert eb.bound == 1.0
    assert np.all(exit_time(env, 0.5, 0.5, 0.5, SdeConfig(), 3)[:, 0] == 0.0)
    with pytest.raises(ValueError):
        exit_laplace_bound(env, -3.0, 1.0)
    assert '"lambda_star"' in eb.to_json()
