import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from brownian_engine import dynamics as dy
from brownian_engine import perturb as pt
from brownian_engine import thermo
from brownian_engine.core import Bath, Oscillator


def bath_for(y, omega=1.0):
    """Bath with beta hbar omega / 2 = y in natural units."""
    return Bath(omega / (2.0 * y))


def test_first_order_constant_path_vanishes():
    osc = Oscillator(1.0, 0.7)
    x1 = pt.first_order(dy.FrequencySchedule.constant(1.2), dy.DiffusionSchedule.constant(0.4), osc, 0.5)
    assert x1.as_array() == pytest.approx([0.0, 0.0, 0.0], abs=1e-15)


def test_first_order_matches_slow_ode():
    # X(tau) - X0 -> X1/tau for slow driving; difference of two taus removes O(1/tau^2)
    osc = Oscillator(1.0, 1.0)
    path = dy.FrequencySchedule.linear_ramp(1.0, 0.6, 1.0)
    D = dy.DiffusionSchedule.linear_ramp(1.0, 1.4, 1.0)
    x0 = pt.zeroth_order(path.value(0.0), D.value(0.0), osc)
    est = []
    for tau in (400.0, 800.0):
        traj = dy.moment_ode_integrate(osc, path.rescaled(tau), D.rescaled(tau), x0, (0.0, tau))
        X0 = pt.zeroth_order(path.value(1.0), D.value(1.0), osc).as_array()
        est.append((traj.final.as_array() - X0) * tau)
    rich = 2 * est[1] - est[0]
    x1 = pt.first_order(path, D, osc, 1.0).as_array()
    np.testing.assert_allclose(rich, x1, rtol=1e-4, atol=1e-6)


def test_perturbed_moments_at_tau():
    osc = Oscillator()
    pm = pt.perturbed_moments(dy.FrequencySchedule.linear_ramp(1.0, 1.0, 1.0),
                              dy.DiffusionSchedule.constant(1.0), osc, 0.5)
    np.testing.assert_allclose(pm.at_tau(10.0), pm.zeroth.as_array() + pm.first.as_array() / 10)


@pytest.mark.parametrize("regime,kappa,tol", [("overdamped", 200.0, 1e-4), ("weak_dissipation", 1e-3, 1e-3)])
@pytest.mark.parametrize("y", [0.05, 0.7, 3.0])
def test_regime_q2_correction_matches_general(regime, kappa, tol, y):
    osc = Oscillator(1.3, kappa)
    bath = bath_for(y)
    path = dy.FrequencySchedule.linear_ramp(1.0, 0.8, 1.0)
    D = dy.DiffusionSchedule.isothermal(osc, path, bath, "quantum")
    s = 0.3
    exact = pt.first_order(path, D, osc, s).q2
    approx = pt.q2_correction_regime(path.value(s), bath, osc, path.derivative(s), regime)
    assert approx == pytest.approx(exact, rel=tol)


def test_g_function_limits():
    w = 1.7
    hot = Bath(1e5)
    assert pt.g_function(w, hot, "overdamped") == pytest.approx(w**-4, rel=1e-9)
    assert pt.g_function(w, hot, "weak_dissipation") == pytest.approx(w**-2, rel=1e-9)
    cold = Bath(1e-3)
    assert pt.g_function(w, cold, "overdamped") == pytest.approx(
        pt.g_function(w, cold, "overdamped", "low_T"), rel=1e-12)
    assert pt.g_function(w, cold, "weak_dissipation") == pytest.approx(0.0, abs=1e-300)
    with pytest.raises(ValueError):
        pt.g_function(w, cold, "weak_dissipation", "low_T")
    with pytest.raises(ValueError):
        pt.g_function(w, cold, "general")
    with pytest.raises(ValueError):
        pt.g_function(-1.0, cold, "overdamped")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.1, 100.0))
def test_general_weight_reduces_to_regimes(omega, T_over_omega):
    # deep in the quantum regime the weak-dissipation g is exponentially small
    # and the O(kappa^2) remainder dominates, so stay at y = beta hbar omega/2 <= 5
    bath = Bath(T_over_omega * omega)
    big, small = Oscillator(1.0, 1e6), Oscillator(1.0, 1e-7)
    od = pt.prefactor(big, bath, "overdamped") * pt.g_function(omega, bath, "overdamped")
    wd = pt.prefactor(small, bath, "weak_dissipation") * pt.g_function(omega, bath, "weak_dissipation")
    assert pt.general_weight(omega, big, bath) == pytest.approx(od, rel=1e-8)
    assert pt.general_weight(omega, small, bath) == pytest.approx(wd, rel=1e-8, abs=1e-300)


def test_linear_path_functional_closed_form():
    wi, wf = 1.0, 0.5
    val = pt.protocol_functional(pt.linear_path(wi, wf), lambda w: w**-4)
    # int g w'^2 ds = (wf - wi) int_wi^wf w^-4 dw
    assert val == pytest.approx((wf - wi) * (wf**-3 - wi**-3) / -3.0, rel=1e-13)


def test_irreversible_heat_routes_agree():
    osc = Oscillator(1.0, 0.8)
    bath = Bath(0.6)
    path = pt.linear_path(1.0, 1.6)
    tau = 50.0
    res = pt.irreversible_heat(path, tau, bath, osc, "general")
    q_x1, q_dual = pt.irreversible_heat_from_moments(path, tau, bath, osc, "quantum")
    assert q_x1 == pytest.approx(res.Q_irr, rel=1e-10)
    assert q_dual == pytest.approx(res.Q_irr, rel=1e-8)
    assert res.Sigma == pytest.approx(res.Q_irr * tau / bath.T)


def test_irreversible_heat_classical_route():
    osc = Oscillator(2.0, 0.3)
    bath = Bath(1.5)
    path = pt.linear_path(1.0, 0.7)
    res = pt.irreversible_heat(path, 10.0, bath, osc, "general", "classical")
    q_x1, q_dual = pt.irreversible_heat_from_moments(path, 10.0, bath, osc, "classical")
    assert q_x1 == pytest.approx(res.Q_irr, rel=1e-10)
    assert q_dual == pytest.approx(res.Q_irr, rel=1e-8)


CLOSED = [("overdamped", "classical"), ("overdamped", "low_T"),
          ("weak_dissipation", "classical"), ("weak_dissipation", "full")]


@pytest.mark.parametrize("regime,limit", CLOSED + [("overdamped", "full")])
@pytest.mark.parametrize("wi,wf", [(1.0, 2.5), (2.0, 0.6)])
def test_optimal_protocol_attains_bound(regime, limit, wi, wf):
    osc = Oscillator(1.0, 1.0)
    bath = Bath(0.4)
    opt = pt.optimal_protocol(wi, wf, bath, regime, limit)
    res = pt.irreversible_heat(opt.schedule, 1.0, bath, osc, regime, limit)
    assert res.I == pytest.approx(opt.I_min, rel=1e-9)
    bound = pt.complementarity_bound(wi, wf, bath, osc, regime, limit)
    assert res.Q_irr == pytest.approx(bound, rel=1e-9)
    assert opt.schedule.value(0.0) == wi and opt.schedule.value(1.0) == wf


@pytest.mark.parametrize("regime,limit", CLOSED)
def test_closed_and_numeric_paths_agree(regime, limit):
    bath = Bath(0.4)
    a = pt.optimal_protocol(1.0, 2.5, bath, regime, limit)
    b = pt.optimal_protocol(1.0, 2.5, bath, regime, limit, method="quadrature")
    assert a.closed_form and not b.closed_form
    np.testing.assert_allclose(a.samples, b.samples, rtol=1e-10)
    assert a.I_min == pytest.approx(b.I_min, rel=1e-10)


def test_optimal_path_satisfies_euler_lagrange():
    # g(w) w'^2 is constant along the minimiser
    bath = Bath(0.3)
    opt = pt.optimal_protocol(1.0, 3.0, bath, "overdamped", "full")
    vals = [opt.g(opt.schedule.value(s)) * opt.schedule.derivative(s) ** 2 for s in np.linspace(0, 1, 11)]
    np.testing.assert_allclose(vals, opt.I_min, rtol=1e-9)


def test_perturbed_paths_cost_more(rng):
    bath = Bath(0.5)
    opt = pt.optimal_protocol(1.0, 2.0, bath, "overdamped", "classical")
    g = opt.g
    for _ in range(20):
        n = rng.integers(1, 4)
        amp = rng.uniform(-0.2, 0.2)
        base = opt.schedule
        path = dy.FrequencySchedule.function(
            lambda s: base.value(s) + amp * math.sin(n * math.pi * s),
            lambda s: base.derivative(s) + amp * n * math.pi * math.cos(n * math.pi * s))
        assert pt.protocol_functional(path, g) > opt.I_min


def test_bound_closed_forms():
    osc = Oscillator(1.0, 2.0)
    bath = Bath(0.5)
    assert pt.complementarity_bound(1.0, 2.0, bath, osc, "overdamped", "classical") == pytest.approx(
        2 * 2.0 * 0.5 * 0.25)
    assert pt.complementarity_bound(1.0, 1.0, bath, osc) == 0.0
    # the full overdamped bound tends to the classical one when hot
    hot = Bath(1e4)
    assert pt.complementarity_bound(1.0, 2.0, hot, osc) == pytest.approx(
        pt.complementarity_bound(1.0, 2.0, hot, osc, "overdamped", "classical"), rel=1e-8)


def test_bound_table_layout(tmp_path):
    rows = pt.bound_table(1.0, [2.0, 3.0], [0.5, 1.0], Oscillator())
    assert [r[1:3] for r in rows] == [(2.0, 0.5), (2.0, 1.0), (3.0, 0.5), (3.0, 1.0)]
    text = pt.write_bound_table(tmp_path / "b.csv", rows).read_text()
    assert text.splitlines()[0] == "omega_i,omega_f,beta_hbar_omega,bound"


def test_protocol_csv(tmp_path):
    bath = Bath(1.0)
    path = pt.linear_path(1.0, 2.0)
    res = pt.irreversible_heat(path, 5.0, bath, Oscillator(), n_samples=10)
    g = lambda w: pt.g_function(w, bath, "overdamped")  # noqa: E731
    lines = res.to_csv(tmp_path / "p.csv", g, path).read_text().splitlines()
    assert lines[0] == "s,omega,g,dI_ds"
    assert len(lines) == pt.MIN_SAMPLES + 1


def test_argument_validation():
    with pytest.raises(ValueError):
        pt.irreversible_heat(pt.linear_path(1, 2), 0.0, Bath(1.0), Oscillator())
    with pytest.raises(ValueError):
        pt.irreversible_heat(pt.linear_path(1, 2), 1.0, Bath(1.0), Oscillator(), "weird")
    with pytest.raises(ValueError):
        pt.optimal_protocol(0.0, 1.0, Bath(1.0))
