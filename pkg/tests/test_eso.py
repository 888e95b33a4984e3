import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qconsensus.eso import EsoError, EsoGains, SaturationBounds, eso_derivative, h_bar, observer_matrix, saturate_estimates
from qconsensus.nonlinear import rk4_interval


def test_observer_matrix_layout():
    E = observer_matrix([4, 6, 4, 1])
    assert np.array_equal(E, [[-4, 1, 0, 0], [-6, 0, 1, 0], [-4, 0, 0, 1], [-1, 0, 0, 0]])


def test_gains_reject_non_hurwitz():
    with pytest.raises(EsoError, match="Hurwitz"):
        EsoGains((1.0, -1.0), 0.1)
    with pytest.raises(EsoError):
        EsoGains((2.0, 1.0), 1.5)
    assert EsoGains((4, 6, 4, 1), 0.01).r == 3


def test_derivative_examples():
    g = EsoGains((2.0, 1.0), 0.1)
    assert np.array_equal(eso_derivative([0.0, 0.0], 0.0, 0.0, g), [0.0, 0.0])
    assert np.allclose(eso_derivative([0.0, 0.0], 1.0, 0.0, g), [20.0, 100.0])
    # u enters row r (the last plant row), not the extended one
    assert np.allclose(eso_derivative([0.0, 0.0], 0.0, 3.0, g), [3.0, 0.0])


def test_derivative_broadcasts_over_agents():
    g = EsoGains((4, 6, 4, 1), 0.05)
    rh = np.arange(8.0).reshape(2, 4)
    d = eso_derivative(rh, np.array([1.0, -1.0]), np.array([0.5, 2.0]), g)
    for i in range(2):
        assert np.allclose(d[i], eso_derivative(rh[i], [1.0, -1.0][i], [0.5, 2.0][i], g))


def test_injection_scaling():
    a = EsoGains((4, 6, 4, 1), 0.02).injection
    b = EsoGains((4, 6, 4, 1), 0.01).injection
    assert np.allclose(b / a, [2, 4, 8, 16])


def test_saturation_examples():
    assert np.array_equal(saturate_estimates([5, -3], [10, 10]), [5, -3])
    assert np.array_equal(saturate_estimates([15], SaturationBounds((10,))), [10])
    assert np.array_equal(saturate_estimates([-200], [100]), [-100])
    with pytest.raises(EsoError):
        SaturationBounds((1.0, 0.0))


@given(arrays(float, 4, elements=st.floats(-1e6, 1e6)))
def test_saturation_idempotent(x):
    M = [10, 10, 10, 100]
    once = saturate_estimates(x, M)
    assert np.array_equal(saturate_estimates(once, M), once)


def test_h_bar_examples():
    assert h_bar(np.zeros(4), (4, 4)) == 0.0
    assert h_bar([1, 2, 3, 99], (4, 4)) == 15.0
    with pytest.raises(EsoError):
        h_bar([1.0], (4, 4))


def observe(eps, w, t_end):
    """x' = w(t) with u = 0 and a second-order observer; returns (t, |extended-state error|)."""
    g = EsoGains((2.0, 1.0), eps)

    def f(t, y):
        d = np.empty(3)
        d[0] = w(t)
        d[1:] = eso_derivative(y[1:], y[0], 0.0, g)
        return d

    n = math.ceil(t_end / (eps / 20))
    h = t_end / n
    y, t, out = np.zeros(3), 0.0, []
    for start in range(0, n, 100):
        m = min(100, n - start)
        y = rk4_interval(f, t, y, m * h, m)
        t += m * h
        out.append((t, abs(y[2] - w(t))))
    return np.array(out)


def test_constant_disturbance_is_recovered():
    err = observe(0.01, lambda t: 2.0, 2.0)
    assert np.all(err[err[:, 0] >= 1.0, 1] <= 0.05 * 2.0)
