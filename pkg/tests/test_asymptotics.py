import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coalsim.asymptotics import (DivergenceError, ScheduleKind, TowerOverflow, f_star,
                                 fit_power_law, log_star, make_schedule, ode_density, tow)
from coalsim.lattice import GraphSpec, ball_volume


def test_tow():
    assert tow(0, 5) == 5
    assert tow(2, 1) == pytest.approx(15.15426224, rel=1e-8)
    assert isinstance(tow(4, 1), TowerOverflow)
    assert tow(4, 1) > 1e308


def test_log_star_values():
    assert log_star(2) == 1
    assert log_star(15) == 2
    assert log_star(16) == 3
    assert log_star(10 ** 100) == 4
    assert log_star(10 ** 1656520) == 4
    assert log_star(10 ** 1656521) == 5


@pytest.mark.parametrize("m", [1, 2, 3])
def test_log_star_inverts_tow(m):
    assert log_star(tow(m, 1)) == m
    assert log_star(tow(m, 1) + 1) == m + 1


@given(a=st.floats(1, 1e300), b=st.floats(1, 1e300))
def test_log_star_monotone(a, b):
    lo, hi = sorted((a, b))
    assert log_star(lo) <= log_star(hi)


def test_f_star():
    assert f_star(lambda x: x / 2, 8) == 3
    n = 10 ** 6
    count, x = 0, float(n)
    while x > 1:
        x = 2 * math.log(x)
        count += 1
    assert f_star(lambda x: 2 * math.log(x), n) == count
    with pytest.raises(DivergenceError):
        f_star(lambda x: x + 1, 10)


def test_f_star_sqrt_float():
    # sqrt never reaches 1 in exact arithmetic; in doubles the iterates hit 1.0 after many steps
    brute, x = 0, 1e6
    while x > 1:
        x = math.sqrt(x)
        brute += 1
    assert f_star(math.sqrt, 1e6) == brute


def test_ode_density():
    assert ode_density(0, 3.0) == 3.0
    assert ode_density(1, 2.0) == pytest.approx(1.0)
    assert ode_density(98, 1.0) == pytest.approx(0.02)


@given(t=st.floats(0, 100), r0=st.floats(0.01, 10))
def test_ode_residual(t, r0):
    h = 1e-5 * (1 + t)
    d = (ode_density(t + h, r0) - ode_density(max(t - h, 0), r0)) / (t + h - max(t - h, 0))
    r = ode_density(t, r0)
    assert d == pytest.approx(-r * r / 2, rel=1e-6 if t > h else 1e-4)


def test_fit_power_law(rng):
    xs = np.geomspace(1, 100, 12)
    b, a, r2 = fit_power_law(list(zip(xs, xs ** 2)))
    assert b == pytest.approx(2) and r2 == pytest.approx(1)
    ys = 5 / xs * np.exp(0.01 * rng.standard_normal(len(xs)))
    assert fit_power_law(list(zip(xs, ys)))[0] == pytest.approx(-1, abs=0.05)
    xs = np.linspace(1, 10, 5)
    assert fit_power_law(list(zip(xs, np.full(5, 3.0))))[0] == pytest.approx(0, abs=0.01)


def test_fit_power_law_errors():
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (10, 2)])
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (2, 2), (3, 3)])
    with pytest.raises(ValueError):
        fit_power_law([(1, 1), (5, -2), (10, 3)])
    assert fit_power_law([(1, 1), (2, 2), (3, 3)], min_span=2)[0] == pytest.approx(1)


def test_long_time_schedule():
    s = make_schedule("long_time", 16, 1.0)
    assert s.K == 1 and s.t[0] == pytest.approx(256) and s.R[0] == pytest.approx(32)
    for m in (16, 100, 10 ** 4, 10 ** 6):
        for g in (0.5, 2.0):
            s = make_schedule(ScheduleKind.LONG_TIME, m, g)
            assert s.R[-1] == pytest.approx(2 * g * m)
            assert np.allclose(s.t[1:] / s.t[:-1], math.e)
            assert np.all(np.diff(s.R) >= 0)
    with pytest.raises(ValueError):
        make_schedule("long_time", 8)


def test_induction_schedule():
    g = GraphSpec.zd(2)
    s = make_schedule("induction", 2, ball_volume=lambda r: ball_volume(g, r))
    assert s.t[1] == pytest.approx(13.0 ** -6, rel=1e-12)
    s = make_schedule("induction", 6, ball_volume=lambda r: ball_volume(g, r))
    assert s.effectively_zero[0] and not s.effectively_zero[-1]
    fin = np.isfinite(s.log_t)
    # the deepest stages are beyond even ln-representation; they form a prefix
    assert np.all(fin[np.argmax(fin):])
    assert np.all(np.diff(s.log_t[fin]) > 0)


def test_log_star_of_overflowed_tower():
    assert isinstance(tow(3, math.e), TowerOverflow)
    assert log_star(tow(3, math.e)) == 4  # Tow(3, e) = Tow(4, 1)
    assert log_star(tow(6, 2.0)) == 7
    assert log_star(tow(9, 1.0)) == 9
