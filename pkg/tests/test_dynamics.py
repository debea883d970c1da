import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brownian_engine import bessel, dynamics as dy
from brownian_engine.core import Oscillator, SecondMoments


# ------------------------------------------------------------------ oracles

def rk4(f, y0, t0, t1, n):
    y = np.array(y0, dtype=float)
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def rk4_matrix(osc, freq, t, n=4000):
    """Columns: solutions with (q, p)(0) = (1, 0) and (0, 1)."""
    m, k = osc.m, osc.kappa

    def f(t, y):
        q1, p1, q2, p2 = y
        w2 = freq.omega2(t)
        return np.array([p1 / m, -2 * k * p1 - m * w2 * q1, p2 / m, -2 * k * p2 - m * w2 * q2])

    q1, p1, q2, p2 = rk4(f, [1, 0, 0, 1], 0.0, t, n)
    return np.array([[q1, q2], [p1, p2]])


def rk4_moments(osc, freq, D, V0, t, n=4000):
    m, k = osc.m, osc.kappa

    def f(t, x):
        q2, qp, p2 = x
        w2 = freq.omega2(t)
        return np.array([2 * qp / m, p2 / m - m * w2 * q2 - 2 * k * qp,
                         -2 * m * w2 * qp - 4 * k * p2 + 2 * D.value(t)])

    return rk4(f, V0.as_array(), 0.0, t, n)


# ------------------------------------------------------------------ bessel

def test_bessel_half_order_closed_form():
    for x in (0.1, 1.0, 7.5, 40.0):
        assert bessel.bessel_j_real_order(0.5, x) == pytest.approx(
            math.sqrt(2 / (math.pi * x)) * math.sin(x), rel=1e-13)


@pytest.mark.parametrize("nu", [1 / 3, -1 / 3, 2 / 3, -2 / 3, 2.7, 12.25])
def test_bessel_against_mpmath(nu):
    mp.mp.dps = 30
    for x in (0.05, 0.9, 3.3, 17.0, 250.0):
        assert bessel.bessel_j_real_order(nu, x) == pytest.approx(float(mp.besselj(nu, x)),
                                                                   rel=1e-10, abs=1e-14)
        assert bessel.bessel_j_derivative(nu, x) == pytest.approx(
            float(mp.besselj(nu, x, derivative=1)), rel=1e-9, abs=1e-13)


def test_bessel_y_against_mpmath():
    mp.mp.dps = 30
    for nu in (0.0, 1.0, 3.0):
        for x in (0.3, 2.0, 30.0):
            assert bessel.bessel_y(nu, x) == pytest.approx(float(mp.bessely(nu, x)), rel=1e-10)
            assert bessel.bessel_y_derivative(nu, x) == pytest.approx(
                float(mp.bessely(nu, x, derivative=1)), rel=1e-9)


def test_bessel_range_errors():
    with pytest.raises(bessel.BesselRangeError):
        bessel.bessel_j_real_order(500.0, 1.0)
    with pytest.raises(bessel.BesselRangeError):
        bessel.bessel_j_real_order(1.0, 1e6)


# -------------------------------------------------------------- schedules

def test_schedules():
    lin = dy.FrequencySchedule.linear_ramp(1.0, 3.0, 2.0)
    assert lin.value(2.0) == pytest.approx(2.0)
    assert lin.value(5.0) == pytest.approx(2.0)
    assert lin.derivative(1.0) == pytest.approx(
        (lin.value(1.0 + 1e-6) - lin.value(1.0 - 1e-6)) / 2e-6, rel=1e-8)
    ex = dy.FrequencySchedule.exponential_ramp(1.0, 2.0, 1.0)
    assert ex.omega2(1.0) == pytest.approx(math.e**2)
    tab = dy.FrequencySchedule.tabulated([0, 1, 2], [1.0, 1.5, 1.7])
    assert tab.value(1.0) == pytest.approx(1.5)
    assert tab.value(9.0) == pytest.approx(1.7)
    with pytest.raises(ValueError):
        dy.FrequencySchedule.linear_ramp(1.0, -1.5, 1.0)
    with pytest.raises(ValueError):
        dy.FrequencySchedule.tabulated([0, 1], [1.0, -1.0])
    with pytest.raises(ValueError):
        dy.DiffusionSchedule.constant(-1.0)
    resc = lin.rescaled(10.0)
    assert resc.value(5.0) == pytest.approx(lin.value(1.0))
    assert resc.derivative(5.0) == pytest.approx(lin.derivative(1.0) / 5.0)


def test_isothermal_diffusion_derivative():
    from brownian_engine.core import Bath
    osc = Oscillator(1.0, 0.5)
    freq = dy.FrequencySchedule.linear_ramp(1.0, 1.0, 1.0)
    D = dy.DiffusionSchedule.isothermal(osc, freq, Bath(0.3), "quantum")
    h = 1e-6
    assert D.derivative(0.4) == pytest.approx((D.value(0.4 + h) - D.value(0.4 - h)) / (2 * h),
                                              rel=1e-7)


# --------------------------------------------------------- fundamental matrix

CASES = [
    ("constant_under", Oscillator(1.0, 0.2), dy.FrequencySchedule.constant(1.5)),
    ("constant_over", Oscillator(1.3, 3.0), dy.FrequencySchedule.constant(0.5)),
    ("constant_critical", Oscillator(1.0, 1.0), dy.FrequencySchedule.constant(1.0)),
    ("linear", Oscillator(1.0, 0.3), dy.FrequencySchedule.linear_ramp(1.0, 2.0, 3.0)),
    ("linear_mass", Oscillator(2.5, 0.7), dy.FrequencySchedule.linear_ramp(0.8, 0.5, 2.0)),
    ("exponential", Oscillator(1.0, 0.35), dy.FrequencySchedule.exponential_ramp(1.0, 1.5, 2.0)),
    ("exponential_down", Oscillator(0.7, 0.6), dy.FrequencySchedule.exponential_ramp(2.0, -1.0, 2.0)),
    ("exponential_integer_order", Oscillator(1.0, 1.0), dy.FrequencySchedule.exponential_ramp(1.0, 2.0, 1.0)),
]


@pytest.mark.parametrize("name,osc,freq", CASES, ids=[c[0] for c in CASES])
def test_fundamental_matrix_against_rk4(name, osc, freq):
    t = min(freq.ramp_duration, 2.0) if freq.kind != "constant" else 2.0
    sol = dy.fundamental_solution(osc, freq)
    assert not isinstance(sol, dy.NumericalSolution)
    M = sol.propagator(t)
    np.testing.assert_allclose(M, rk4_matrix(osc, freq, t), rtol=1e-9, atol=1e-11)
    fm = sol.matrix(t)
    assert fm.wronskian == pytest.approx(math.exp(-2 * osc.kappa * t), rel=1e-10)


@pytest.mark.parametrize("name,osc,freq", CASES[3:], ids=[c[0] for c in CASES[3:]])
def test_propagator_composition(name, osc, freq):
    sol = dy.fundamental_solution(osc, freq)
    t1, t2 = 0.4 * freq.ramp_duration, 0.9 * freq.ramp_duration
    np.testing.assert_allclose(sol.propagator(t2), sol.propagator(t2, t1) @ sol.propagator(t1),
                               rtol=1e-10, atol=1e-12)


def test_numerical_solution_matches_closed_form():
    osc = Oscillator(1.0, 0.3)
    freq = dy.FrequencySchedule.linear_ramp(1.0, 2.0, 3.0)
    closed = dy.fundamental_solution(osc, freq)
    numeric = dy.fundamental_solution(osc, freq, prefer_closed_form=False)
    assert isinstance(numeric, dy.NumericalSolution)
    np.testing.assert_allclose(numeric.propagator(2.5), closed.propagator(2.5), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(numeric.propagator(2.5, 1.0), closed.propagator(2.5, 1.0),
                               rtol=1e-10, atol=1e-12)


def test_decreasing_linear_ramp_falls_back_with_warning():
    osc = Oscillator(1.0, 0.3)
    freq = dy.FrequencySchedule.linear_ramp(1.0, -0.5, 2.0)
    with pytest.warns(dy.ClosedFormFallbackWarning):
        sol = dy.fundamental_solution(osc, freq)
    np.testing.assert_allclose(sol.propagator(2.0), rk4_matrix(osc, freq, 2.0), rtol=1e-9, atol=1e-11)


def test_matrix_helpers_validate_time():
    osc = Oscillator()
    freq = dy.FrequencySchedule.linear_ramp(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        dy.fundamental_linear_ramp(osc, freq, 2.0)
    with pytest.raises(ValueError):
        dy.fundamental_exponential_ramp(osc, freq, 0.5)
    with pytest.raises(ValueError):
        dy.fundamental_constant(osc, 1.0, -1.0)
    fm = dy.fundamental_constant(osc, 1.0, 0.0)
    np.testing.assert_allclose(fm.matrix(), np.eye(2))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.1, 5.0), st.floats(0.0, 20.0))
def test_constant_wronskian_property(kappa, omega, t):
    fm = dy.fundamental_constant(Oscillator(1.0, kappa), omega, t)
    # the determinant of O(1) entries cannot resolve below ~eps * max|M|^2
    scale = np.max(np.abs(fm.matrix())) ** 2
    assert fm.wronskian == pytest.approx(math.exp(-2 * kappa * t), rel=1e-9, abs=1e-14 * scale)


# ------------------------------------------------------------- variances

V0 = SecondMoments(0.7, 0.1, 1.4)


@pytest.mark.parametrize("name,osc,freq", CASES, ids=[c[0] for c in CASES])
def test_variance_propagation_against_rk4(name, osc, freq):
    t = 2.0 if freq.kind == "constant" else min(freq.ramp_duration, 2.0)
    D = dy.DiffusionSchedule.linear_ramp(0.4, 1.1, t)
    V = dy.propagate_variance(dy.fundamental_solution(osc, freq), V0, D, t)
    np.testing.assert_allclose(V.as_array(), rk4_moments(osc, freq, D, V0, t), rtol=1e-9, atol=1e-11)


def test_moment_ode_matches_variance_propagation():
    osc = Oscillator(1.0, 0.35)
    freq = dy.FrequencySchedule.exponential_ramp(1.0, 1.5, 2.0)
    D = dy.DiffusionSchedule.constant(0.7)
    traj = dy.moment_ode_integrate(osc, freq, D, V0, (0.0, 3.0), t_eval=np.linspace(0, 3, 7))
    for t, X in zip(traj.t, traj.X):
        V = dy.propagate_variance(dy.fundamental_solution(osc, freq, t_end=t), V0, D, t)
        np.testing.assert_allclose(X, V.as_array(), rtol=1e-8, atol=1e-10)
    assert traj.at(1.5).q2 == pytest.approx(traj.X[3, 0], rel=1e-8)


def test_zero_diffusion_is_pure_transport():
    osc = Oscillator(1.0, 0.5)
    sol = dy.fundamental_solution(osc, dy.FrequencySchedule.constant(1.0))
    V = dy.propagate_variance(sol, V0, dy.DiffusionSchedule.constant(0.0), 3.0)
    P = sol.propagator(3.0)
    np.testing.assert_allclose(V.as_matrix(), P @ V0.as_matrix() @ P.T, rtol=1e-13)


def test_moment_trajectory_csv(tmp_path):
    osc = Oscillator(1.0, 1.0)
    traj = dy.moment_ode_integrate(osc, dy.FrequencySchedule.constant(1.0),
                                   dy.DiffusionSchedule.constant(1.0), V0, (0.0, 1.0),
                                   t_eval=[0.0, 0.5, 1.0])
    lines = traj.to_csv(tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "t,q2,qp,p2,omega,D"
    assert len(lines) == 4


def test_moment_matrix_eigenvalues_stable():
    for kappa, omega in [(0.1, 1.0), (10.0, 1.0), (1.0, 1.0)]:
        ev = np.linalg.eigvals(dy.moment_matrix(Oscillator(1.0, kappa), omega))
        assert np.all(ev.real < 0)
