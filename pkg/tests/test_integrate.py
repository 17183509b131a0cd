import numpy as np
import pytest

from zpm.integrate import IntegratorSettings, integrate_interval


def _decay(rates):
    def f(t, y, rows):
        return -rates[rows][:, None] * y
    return f


def test_exponential_decay_accuracy():
    rates = np.array([0.1, 1.0, 3.0])
    res = integrate_interval(_decay(rates), 0.0, 2.0, np.ones((3, 1)), IntegratorSettings(rtol=1e-10, atol=1e-12))
    assert res.ok.all()
    assert np.allclose(res.y[:, 0], np.exp(-2.0 * rates), rtol=1e-8)


def test_rows_are_independent_of_batch():
    rates = np.array([0.3, 5.0, 0.01, 2.0])
    full = integrate_interval(_decay(rates), 0.0, 1.0, np.ones((4, 2)))
    for i in range(4):
        one = integrate_interval(_decay(rates[i:i + 1]), 0.0, 1.0, np.ones((1, 2)))
        assert np.array_equal(one.y[0], full.y[i])
        assert one.n_steps[0] == full.n_steps[i]


def test_oscillator_tolerance_scaling():
    def f(t, y, rows):
        return np.stack([y[:, 1], -y[:, 0]], axis=1)
    errs = []
    for tol in (1e-6, 1e-9):
        res = integrate_interval(f, 0.0, 10.0, np.array([[1.0, 0.0]]), IntegratorSettings(rtol=tol, atol=tol * 1e-3))
        errs.append(abs(res.y[0, 0] - np.cos(10.0)))
    assert errs[1] < errs[0]
    assert errs[0] < 1e-4


def test_time_passed_per_row():
    seen = []

    def f(t, y, rows):
        seen.append(t.copy())
        return np.ones_like(y)

    res = integrate_interval(f, 5.0, 6.0, np.zeros((2, 1)))
    assert np.allclose(res.y, 1.0)
    assert all(np.all((s >= 5.0) & (s <= 6.0)) for s in seen)


def test_non_finite_rows_fail_alone():
    def f(t, y, rows):
        out = -y.copy()
        out[rows == 1] = np.nan
        return out

    res = integrate_interval(f, 0.0, 1.0, np.ones((3, 1)))
    assert res.ok.tolist() == [True, False, True]
    assert np.allclose(res.y[[0, 2], 0], np.exp(-1.0), rtol=1e-5)


def test_step_size_is_carried():
    res = integrate_interval(_decay(np.array([1.0])), 0.0, 1.0, np.ones((1, 1)), h0=np.array([0.01]))
    assert 0.0 < res.h_next[0] <= 1.0
    assert res.n_steps[0] >= 1
