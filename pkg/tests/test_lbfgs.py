import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trd.training.lbfgs import LbfgsConfig, NonFiniteObjective, lbfgs_minimize


def quadratic(c):
    def fg(x):
        d = x - c
        return 0.5 * float(d @ d), d.copy()
    return fg


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


@settings(max_examples=30)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
def test_isotropic_quadratic(c):
    c = np.array(c)
    res = lbfgs_minimize(quadratic(c), np.zeros_like(c))
    assert np.max(np.abs(res.x - c)) < 1e-8
    assert res.iterations <= 3


def test_rosenbrock():
    res = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), LbfgsConfig(max_iters=500, gtol=1e-12))
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-5)


def test_history_monotone_and_best_returned():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(30, 30))
    H = A @ A.T + 0.1 * np.eye(30)
    b = rng.normal(size=30)

    def fg(x):
        return 0.5 * x @ H @ x - b @ x, H @ x - b

    res = lbfgs_minimize(fg, np.zeros(30), LbfgsConfig(max_iters=15))
    assert all(b2 <= a2 for a2, b2 in zip(res.history, res.history[1:]))
    assert res.f == min(res.history)
    assert res.f == pytest.approx(fg(res.x)[0])


def test_wolfe_and_config_validation():
    for bad in (dict(c1=0.5, c2=0.4), dict(c1=0.0), dict(c2=1.0), dict(memory=0)):
        with pytest.raises(ValueError):
            LbfgsConfig(**bad)


def test_non_finite_start_raises():
    with pytest.raises(NonFiniteObjective):
        lbfgs_minimize(lambda x: (np.nan, x), np.zeros(2))


def test_line_search_failure_returns_best():
    # gradient points the wrong way: no step can satisfy sufficient decrease
    def fg(x):
        return float(x @ x), -2 * x

    res = lbfgs_minimize(fg, np.ones(3))
    assert res.status == "line_search_failed"
    np.testing.assert_array_equal(res.x, np.ones(3))


def test_survives_infinite_trial_points():
    def fg(x):
        if x[0] > 2:
            return np.inf, np.full_like(x, np.nan)
        d = x - 1.5
        return float(d @ d), 2 * d

    res = lbfgs_minimize(fg, np.array([-50.0]))
    assert res.x[0] == pytest.approx(1.5, abs=1e-6)


def test_zero_iterations():
    res = lbfgs_minimize(quadratic(np.ones(3)), np.zeros(3), LbfgsConfig(max_iters=0))
    np.testing.assert_array_equal(res.x, np.zeros(3))
    assert res.history == [1.5]
