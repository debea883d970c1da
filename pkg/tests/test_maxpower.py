import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from brownian_engine import maxpower as mpw
from brownian_engine.core import Oscillator
from brownian_engine.efficiency import StirlingSpec


def inputs(Tc=1.0, Th=2.5, Sh=1.0, Sc=1.0, dS=math.log(2.0), mu=0.0):
    return mpw.MaxPowerInputs(Tc, Th, Sh, Sc, dS, mu)


def nelder_mead(inp):
    x0 = np.log(mpw.optimal_times(inp)) + [0.4, -0.3]
    res = optimize.minimize(lambda x: -mpw.power(inp, *np.exp(x)), x0, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000})
    return np.exp(res.x)


def test_validation():
    with pytest.raises(ValueError):
        inputs(Tc=3.0)
    with pytest.raises(ValueError):
        inputs(Sh=0.0)
    with pytest.raises(ValueError):
        inputs(mu=-0.1)
    with pytest.raises(ValueError):
        mpw.power(inputs(), 0.0, 1.0)
    with pytest.raises(ValueError):
        mpw.eta_at_max_power(inputs(), "guess")


def test_optimal_times_trivial():
    inp = mpw.MaxPowerInputs(1.0, 2.0, 1.0, 2.0, 1.0)
    # r = 1: tau_h = 2*2*1*2/1 = 8, tau_c = 2*1*2*2 = 8
    assert mpw.optimal_times(inp) == pytest.approx((8.0, 8.0))


@pytest.mark.parametrize("Sc,mu", [(1.0, 0.0), (0.3, 0.2), (5.0, 0.7)])
def test_optimal_times_against_nelder_mead(Sc, mu):
    inp = inputs(Sc=Sc, mu=mu)
    np.testing.assert_allclose(nelder_mead(inp), mpw.optimal_times(inp), rtol=1e-6)


def test_max_power_is_stationary():
    inp = inputs(Sc=0.4, mu=0.3)
    th, tc = mpw.optimal_times(inp)
    h = 1e-5
    dP_h = (mpw.power(inp, th * (1 + h), tc) - mpw.power(inp, th * (1 - h), tc)) / (2 * h * th)
    dP_c = (mpw.power(inp, th, tc * (1 + h)) - mpw.power(inp, th, tc * (1 - h))) / (2 * h * tc)
    assert abs(dP_h) < 1e-9 and abs(dP_c) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-4, 4), st.floats(0.0, 2.0), st.floats(0.05, 3.0))
def test_closed_eta_equals_substitution(ratio, log_s, mu, dS):
    inp = mpw.MaxPowerInputs(ratio, 1.0, 1.0, 10**log_s, dS, mu)
    assert mpw.eta_at_max_power(inp) == pytest.approx(mpw.eta_at_max_power(inp, "substitution"),
                                                      rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(-8, 8), st.floats(0.0, 1.0), st.floats(0.05, 3.0))
def test_eta_within_bounds(eta_c, log_s, mu, dS):
    inp = mpw.MaxPowerInputs(1 - eta_c, 1.0, 1.0, 10**log_s, dS, mu)
    rep = mpw.bounds_and_special_values(inp)
    eta = mpw.eta_at_max_power(inp)
    assert rep.lower * (1 - 1e-12) <= eta <= rep.upper * (1 + 1e-12)


def test_curzon_ahlborn_symmetric():
    inp = inputs(Tc=1.0, Th=4.0)
    assert mpw.eta_at_max_power(inp) == pytest.approx(0.5, abs=1e-15)
    assert mpw.eta_ca(0.75) == 0.5


def test_symmetric_with_mu():
    inp = inputs(Tc=1.0, Th=3.0, mu=0.4, dS=0.9)
    assert mpw.eta_at_max_power(inp) == pytest.approx(
        mpw.symmetric_eta(inp.eta_c, 0.4, 0.9), rel=1e-14)


def test_bounds_limits_and_flag():
    rep = mpw.bounds(0.6, 0.0, math.log(2))
    assert (rep.lower, rep.upper) == pytest.approx((0.3, 0.6 / 1.4))
    assert not rep.regime_flag
    rep = mpw.bounds(0.6, 1.0, math.log(2))
    assert rep.regime_flag and rep.upper <= 0.3
    with pytest.raises(ValueError):
        mpw.bounds(1.0, 0.0, 1.0)


def test_maximize_reports_consistent_result():
    inp = inputs(Sc=2.0, mu=0.1)
    res = mpw.maximize(inp)
    assert res.P_max == pytest.approx(mpw.power(inp, res.tau_h_star, res.tau_c_star))
    assert res.eta_star == pytest.approx(mpw.eta_from_times(inp, res.tau_h_star, res.tau_c_star))


def test_from_stirling():
    spec = StirlingSpec(1.0, 2.0, 1.0, 2.0)
    osc = Oscillator(1.0, 5.0)
    inp = mpw.MaxPowerInputs.from_stirling(spec, osc)
    assert inp.DeltaS == pytest.approx(math.log(2.0))
    # classical overdamped optimum: Sigma = 2 kappa (1/w_f - 1/w_i)^2 for both branches
    assert inp.Sigma_h == pytest.approx(2 * 5.0 * 0.25, rel=1e-9)
    assert inp.Sigma_c == pytest.approx(2 * 5.0 * 0.25, rel=1e-9)
    lin = mpw.MaxPowerInputs.from_stirling(spec, osc, protocol="linear")
    assert lin.Sigma_h > inp.Sigma_h
    with pytest.raises(ValueError):
        mpw.MaxPowerInputs.from_stirling(spec, osc, protocol="bang")


def test_figure_grid(tmp_path):
    grid = mpw.figure_grid(2.05, (0.1,), [0.2, 0.5])
    assert len(grid.rows) == 2
    for mu, ec, lo, up, ca, half in grid.rows:
        assert lo <= up and half == 0.5 * ec
    lines = grid.to_csv(tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "mu,eta_c,lower,upper,eta_CA,eta_c_half"
    with pytest.raises(ValueError):
        mpw.figure_grid(1.0)


def test_bounds_are_the_scanned_extremes():
    # the range of eta* over Sigma_c/Sigma_h, found by brute force, matches the reported ends
    ec, mu, L = 0.7, 0.3, math.log(2.05)
    etas = [mpw.eta_at_max_power(mpw.MaxPowerInputs(1 - ec, 1.0, 1.0, 10.0**e, L, mu))
            for e in np.linspace(-14, 14, 281)]
    rep = mpw.bounds(ec, mu, L)
    assert min(etas) == pytest.approx(rep.lower, rel=1e-6)
    assert max(etas) == pytest.approx(rep.upper, rel=1e-6)
