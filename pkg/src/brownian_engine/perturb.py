"""Slow-driving expansion of the moments and the irreversible heat it implies.

With ``s = t/tau`` the moment vector ``X = (<q^2>, <qp>, <p^2>)`` obeys
``dX/ds = tau (A X + Y)``, so ``X = X0 + X1/tau + O(1/tau^2)`` with
``A X0 = -Y`` and ``A X1 = dX0/ds``.

Along an isothermal path the first-order heat is

    tau Q_irr = prefactor * I[omega],   I[omega] = int_0^1 g(omega) (d omega/ds)^2 ds

and ``I`` is minimised by the path on which ``f(omega) = int sqrt(g)`` is
linear in ``s``, giving ``I_min = (f(omega_f) - f(omega_i))^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .core import NATURAL, Bath, Oscillator, Regime, SecondMoments, UnitSystem, as_regime
from .core import steady_state_moments
from .dynamics import DiffusionSchedule, FrequencySchedule, moment_matrix
from .tables import write_csv
from . import thermo

REGIMES = ("overdamped", "weak_dissipation", "general")
LIMITS = ("full", "classical", "low_T")
MIN_SAMPLES = 64


def _check_regime(regime, allowed=REGIMES):
    if regime not in allowed:
        raise ValueError(f"unknown regime {regime!r} (expected one of {allowed})")


def _check_limit(limit):
    if limit not in LIMITS:
        raise ValueError(f"unknown limit {limit!r} (expected one of {LIMITS})")


# ------------------------------------------------------------ moments


def zeroth_order(omega: float, D: float, osc: Oscillator) -> SecondMoments:
    """Instantaneous steady state ``X0 = -A^{-1} Y``."""
    return steady_state_moments(osc, omega, D)


def first_order(freq: FrequencySchedule, D_sched: DiffusionSchedule, osc: Oscillator,
                s: float) -> SecondMoments:
    """``X1(s) = A^{-1}(s) dX0/ds`` for schedules parametrised by ``s`` in [0, 1].

    The result can have negative variances, so it is returned as a plain
    triple rather than validated moments.
    """
    omega = freq.value(s)
    if not omega > 0:
        raise ValueError("A(s) is singular at omega = 0")
    dw = freq.derivative(s)
    D = D_sched.value(s)
    dD = D_sched.derivative(s)
    m, k = osc.m, osc.kappa
    dq2 = dD / (2.0 * k * m * m * omega * omega) - D * dw / (k * m * m * omega**3)
    dp2 = dD / (2.0 * k)
    x = np.linalg.solve(moment_matrix(osc, omega), [dq2, 0.0, dp2])
    return FirstOrder(float(x[0]), float(x[1]), float(x[2]))


@dataclass(frozen=True)
class FirstOrder:
    q2: float
    qp: float
    p2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.q2, self.qp, self.p2])


@dataclass(frozen=True)
class PerturbedMoments:
    s: float
    zeroth: SecondMoments
    first: FirstOrder

    def at_tau(self, tau: float) -> np.ndarray:
        return self.zeroth.as_array() + self.first.as_array() / tau


def perturbed_moments(freq, D_sched, osc, s) -> PerturbedMoments:
    return PerturbedMoments(s, zeroth_order(freq.value(s), D_sched.value(s), osc),
                            first_order(freq, D_sched, osc, s))


def _y(omega, bath, units):
    return 0.5 * units.hbar * omega * bath.beta(units)


def _y_csch2(y):
    # y^2 csch^2 y, finite at both ends
    if y < 1e-4:
        return 1.0 - y * y / 3.0
    if y > 350.0:
        return 0.0
    return (y / math.sinh(y)) ** 2


def _y_coth(y):
    if y < 1e-4:
        return 1.0 + y * y / 3.0
    if y > 20.0:
        return y
    return y / math.tanh(y)


def q2_correction_regime(omega: float, bath: Bath, osc: Oscillator, domega_ds: float,
                         regime: str, units: UnitSystem = NATURAL) -> float:
    """Limiting form of ``<q^2>^(1)`` along an isothermal path.

    overdamped: ``(hbar kappa/2 m omega^4)[coth y + y csch^2 y] omega'``;
    weak dissipation: ``(beta hbar^2/8 kappa m omega) csch^2 y omega'``,
    with ``y = beta hbar omega/2``. Both are written via ``kB T`` so that
    the classical limit is reached smoothly.
    """
    _check_regime(regime, ("overdamped", "weak_dissipation"))
    kT = bath.kT(units)
    y = _y(omega, bath, units)
    m, k = osc.m, osc.kappa
    if regime == "overdamped":
        # hbar (coth y + y csch^2 y)/2 = (kT/omega)(y coth y + y^2 csch^2 y)
        return k * kT * (_y_coth(y) + _y_csch2(y)) / (m * omega**5) * domega_ds
    return kT * _y_csch2(y) / (2.0 * k * m * omega**3) * domega_ds


# ------------------------------------------------------------ g and f


def g_function(omega: float, bath: Bath, regime: str, limit: str = "full",
               units: UnitSystem = NATURAL) -> float:
    """Weight ``g(omega)`` of the protocol functional.

    overdamped: ``[y coth y + y^2 csch^2 y]/(2 omega^4)``, classical ``1/omega^4``,
    low-T ``beta hbar/(4 omega^3)``. weak dissipation: ``y^2 csch^2 y/omega^2``,
    classical ``1/omega^2``. Here ``y = beta hbar omega/2``.
    """
    _check_regime(regime, ("overdamped", "weak_dissipation"))
    _check_limit(limit)
    if not omega > 0:
        raise ValueError("frequency must be positive")
    if regime == "overdamped":
        if limit == "classical":
            return omega**-4
        if limit == "low_T":
            return units.hbar * bath.beta(units) / (4.0 * omega**3)
        y = _y(omega, bath, units)
        return (_y_coth(y) + _y_csch2(y)) / (2.0 * omega**4)
    if limit == "classical":
        return omega**-2
    if limit == "low_T":
        raise ValueError("weak dissipation has no separate low-T form (g is exponentially small)")
    return _y_csch2(_y(omega, bath, units)) / omega**2


def prefactor(osc: Oscillator, bath: Bath, regime: str, units: UnitSystem = NATURAL) -> float:
    """``tau Q_irr = prefactor * I``: ``2 kappa kB T`` or ``kB T/(2 kappa)``."""
    _check_regime(regime, ("overdamped", "weak_dissipation"))
    kT = bath.kT(units)
    return 2.0 * osc.kappa * kT if regime == "overdamped" else kT / (2.0 * osc.kappa)


def general_weight(omega: float, osc: Oscillator, bath: Bath, limit: str = "full",
                   units: UnitSystem = NATURAL) -> float:
    """``tau Q_irr = int w(omega) omega'^2 ds`` for any kappa (no regime limit).

    ``w = (1/4 kappa omega)[(4 kappa^2/omega^2) hbar N - (4 kappa^2/omega^2 + 2) hbar omega N']``
    with ``N = n + 1/2``.
    """
    _check_limit(limit)
    k = osc.kappa
    kT = bath.kT(units)
    if limit == "classical":
        hN = hwN = kT / omega
    else:
        y = _y(omega, bath, units)
        # hbar N = (kT/omega) y coth y; -hbar omega dN/domega = (kT/omega) y^2 csch^2 y
        hN = kT / omega * _y_coth(y)
        hwN = kT / omega * _y_csch2(y)
    r = 4.0 * k * k / (omega * omega)
    return (r * hN + (r + 2.0) * hwN) / (4.0 * k * omega)


def _f_closed(regime, limit, bath, units):
    """``(f, f', h)`` where closed forms exist, else None."""
    if regime == "overdamped" and limit == "classical":
        return (lambda w: -1.0 / w), (lambda w: w**-2), (lambda phi: -1.0 / phi)
    if regime == "overdamped" and limit == "low_T":
        bh = units.hbar * bath.beta(units)
        return ((lambda w: -math.sqrt(bh / w)), (lambda w: 0.5 * math.sqrt(bh) * w**-1.5),
                (lambda phi: bh / (phi * phi)))
    if regime == "weak_dissipation" and limit == "classical":
        return math.log, (lambda w: 1.0 / w), math.exp
    if regime == "weak_dissipation" and limit == "full":
        q = 0.25 * units.hbar * bath.beta(units)
        return ((lambda w: math.log(math.tanh(q * w))),
                (lambda w: 2.0 * q / math.sinh(2.0 * q * w)),
                (lambda phi: math.atanh(math.exp(phi)) / q))
    return None


# ------------------------------------------------------------ protocols


def linear_path(omega_i: float, omega_f: float) -> FrequencySchedule:
    d = omega_f - omega_i
    return FrequencySchedule.function(lambda s: omega_i + d * s, lambda s: d)


def protocol_functional(path: FrequencySchedule, g: Callable[[float], float],
                        rtol: float = 1e-13) -> float:
    """``I = int_0^1 g(omega(s)) omega'(s)^2 ds``."""
    val, err = integrate.quad(lambda s: g(path.value(s)) * path.derivative(s) ** 2, 0.0, 1.0,
                              epsabs=0.0, epsrel=rtol, limit=500)
    return val


@dataclass(frozen=True)
class ProtocolResult:
    Q_irr: float
    Sigma: float
    tau: float
    I: float
    path: np.ndarray = field(repr=False)  # (n, 2): s, omega

    def to_csv(self, path_out, g: Callable[[float], float], schedule: FrequencySchedule):
        rows = ((s, w, g(w), g(w) * schedule.derivative(s) ** 2) for s, w in self.path)
        return write_csv(path_out, ["s", "omega", "g", "dI_ds"], rows)


def _samples(path, n):
    s = np.linspace(0.0, 1.0, max(n, MIN_SAMPLES))
    return np.column_stack([s, [path.value(float(x)) for x in s]])


def irreversible_heat(path: FrequencySchedule, tau: float, bath: Bath, osc: Oscillator,
                      regime: str = "overdamped", limit: str = "full",
                      units: UnitSystem = NATURAL, n_samples: int = MIN_SAMPLES) -> ProtocolResult:
    """First-order irreversible heat of an isothermal frequency path over ``s`` in [0, 1].

    ``regime="general"`` uses the full-kappa weight instead of a limiting ``g``;
    ``I`` is then reported as ``tau Q_irr/(kB T)``.
    """
    _check_regime(regime)
    if not tau > 0:
        raise ValueError("tau must be positive")
    if regime == "general":
        tq = protocol_functional(path, lambda w: general_weight(w, osc, bath, limit, units))
        I = tq / bath.kT(units)
    else:
        I = protocol_functional(path, lambda w: g_function(w, bath, regime, limit, units))
        tq = prefactor(osc, bath, regime, units) * I
    return ProtocolResult(tq / tau, tq / bath.T, tau, I, _samples(path, n_samples))


def irreversible_heat_from_moments(path: FrequencySchedule, tau: float, bath: Bath,
                                   osc: Oscillator, regime: Regime | str = Regime.QUANTUM,
                                   units: UnitSystem = NATURAL) -> tuple[float, float]:
    """Two routes to ``Q_irr`` through the first-order moments.

    Returns ``(q_x1, q_dual)``: the integral ``(1/tau) int m omega omega' <q^2>^(1) ds``
    and ``F(i) - F(f) - W`` with ``W = -int m omega omega' (X0 + X1/tau)_q2 ds``.
    """
    regime = as_regime(regime)
    D_sched = DiffusionSchedule.isothermal(osc, path, bath, regime, units)
    m = osc.m

    def integrand(s):
        w, dw = path.value(s), path.derivative(s)
        x1 = first_order(path, D_sched, osc, s)
        x0 = zeroth_order(w, D_sched.value(s), osc)
        return np.array([m * w * dw * x1.q2, m * w * dw * (x0.q2 + x1.q2 / tau)])

    res, err = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=500)
    w0, w1 = path.value(0.0), path.value(1.0)
    dF = thermo.free_energy(w0, bath, regime, units) - thermo.free_energy(w1, bath, regime, units)
    work = -res[1]
    return float(res[0]) / tau, float(dF - work)


@dataclass(frozen=True, eq=False)
class OptimalProtocol:
    """Minimiser of ``I[omega]`` between fixed endpoints.

    ``schedule`` evaluates ``omega(s)`` and its exact derivative
    ``(f1 - f0)/sqrt(g(omega))``; ``samples`` holds ``h`` evaluated by
    bracketed root finding on the ``f`` used.
    """

    omega_i: float
    omega_f: float
    f0: float
    f1: float
    I_min: float
    schedule: FrequencySchedule = field(repr=False)
    samples: np.ndarray = field(repr=False)
    g: Callable[[float], float] = field(repr=False)
    closed_form: bool = False


def _numeric_f(g, omega_ref):
    def f(w):
        if w == omega_ref:
            return 0.0
        val, _ = integrate.quad(lambda x: math.sqrt(g(x)), omega_ref, w, epsabs=0.0,
                                epsrel=1e-13, limit=200)
        return val
    return f


def _invert(f, target, lo, hi):
    if lo == hi:
        return lo
    return optimize.brentq(lambda w: f(w) - target, lo, hi, xtol=1e-15 * hi, rtol=1e-15,
                           maxiter=500)


def optimal_protocol(omega_i: float, omega_f: float, bath: Bath, regime: str = "overdamped",
                     limit: str = "full", units: UnitSystem = NATURAL,
                     n_samples: int = MIN_SAMPLES, method: str = "auto") -> OptimalProtocol:
    """``omega(s) = h(f(omega_i)(1 - s) + f(omega_f) s)`` with ``f' = sqrt(g)``.

    ``method="auto"`` uses closed-form ``f``/``h`` when available and
    quadrature plus root finding otherwise; ``method="quadrature"`` forces
    the numerical route.
    """
    if not (omega_i > 0 and omega_f > 0):
        raise ValueError("endpoint frequencies must be positive")
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    _check_regime(regime, ("overdamped", "weak_dissipation"))

    def g(w):
        return g_function(w, bath, regime, limit, units)

    closed = _f_closed(regime, limit, bath, units) if method == "auto" else None
    lo, hi = min(omega_i, omega_f), max(omega_i, omega_f)
    s_grid = np.linspace(0.0, 1.0, max(n_samples, MIN_SAMPLES))
    if closed is not None:
        f, fprime, h = closed
        f0, f1 = f(omega_i), f(omega_f)
        d = f1 - f0

        def value(s):
            if s <= 0.0:
                return omega_i
            if s >= 1.0:
                return omega_f
            return min(max(h(f0 + d * s), lo), hi)

        def deriv(s):
            return d / fprime(value(s))

        schedule = FrequencySchedule.function(value, deriv)
        samples = np.column_stack([s_grid, [value(float(s)) for s in s_grid]])
    else:
        f = _numeric_f(g, omega_i)
        f0, f1 = 0.0, f(omega_f)
        d = f1 - f0
        if omega_i == omega_f:
            schedule = FrequencySchedule.constant(omega_i)
        else:
            # omega' = d/sqrt(g(omega)): the f-linear path as an autonomous ODE
            sol = integrate.solve_ivp(lambda s, w: [d / math.sqrt(g(min(max(w[0], lo), hi)))],
                                      (0.0, 1.0), [omega_i], method="DOP853", rtol=1e-13,
                                      atol=1e-15 * hi, dense_output=True)
            if not sol.success:
                raise RuntimeError(f"optimal-path integration failed: {sol.message}")

            def value(s):
                if s <= 0.0:
                    return omega_i
                if s >= 1.0:
                    return omega_f
                return min(max(float(sol.sol(s)[0]), lo), hi)

            schedule = FrequencySchedule.function(
                value, lambda s: d / math.sqrt(g(value(s))))
        ws = []
        for s in s_grid:
            ws.append(_invert(f, f0 + d * s, lo, hi))
        samples = np.column_stack([s_grid, ws])
    if np.any(np.diff(samples[:, 1]) * math.copysign(1.0, omega_f - omega_i) < -1e-12 * hi):
        raise RuntimeError("optimal path is not monotone; f must be strictly increasing")
    return OptimalProtocol(omega_i, omega_f, f0, f1, d * d, schedule, samples, g,
                           closed is not None)


def complementarity_bound(omega_i: float, omega_f: float, bath: Bath, osc: Oscillator,
                          regime: str = "overdamped", limit: str = "full",
                          units: UnitSystem = NATURAL) -> float:
    """Lower bound on ``tau Q_irr`` for an isothermal ``omega_i -> omega_f``.

    Closed forms: overdamped classical ``2 kappa kB T (1/omega_f - 1/omega_i)^2``;
    overdamped low-T ``2 kappa hbar (1/sqrt(omega_f) - 1/sqrt(omega_i))^2``;
    weak classical ``(kB T/2 kappa) ln^2(omega_i/omega_f)``; weak
    ``(kB T/2 kappa) ln^2(tanh(beta hbar omega_f/4)/tanh(beta hbar omega_i/4))``.
    The full overdamped case uses quadrature of ``sqrt(g)``.
    """
    _check_regime(regime, ("overdamped", "weak_dissipation"))
    _check_limit(limit)
    k, kT, hbar = osc.kappa, bath.kT(units), units.hbar
    if omega_i == omega_f:
        return 0.0
    if regime == "overdamped" and limit == "classical":
        return 2.0 * k * kT * (1.0 / omega_f - 1.0 / omega_i) ** 2
    if regime == "overdamped" and limit == "low_T":
        return 2.0 * k * hbar * (omega_f**-0.5 - omega_i**-0.5) ** 2
    if regime == "weak_dissipation" and limit == "classical":
        return kT / (2.0 * k) * math.log(omega_i / omega_f) ** 2
    if regime == "weak_dissipation":
        q = 0.25 * hbar * bath.beta(units)
        return kT / (2.0 * k) * math.log(math.tanh(q * omega_f) / math.tanh(q * omega_i)) ** 2
    g = lambda w: g_function(w, bath, regime, limit, units)  # noqa: E731
    return prefactor(osc, bath, regime, units) * _numeric_f(g, omega_i)(omega_f) ** 2


def bound_table(omega_i: float, omega_f_values, beta_values, osc: Oscillator,
                regime: str = "overdamped", limit: str = "full",
                units: UnitSystem = NATURAL) -> list[tuple]:
    rows = []
    for wf in omega_f_values:
        for b in beta_values:
            bath = Bath.from_beta(float(b), units)
            rows.append((omega_i, float(wf), float(b) * units.hbar * omega_i,
                         complementarity_bound(omega_i, float(wf), bath, osc, regime, limit, units)))
    return rows


def write_bound_table(path, rows):
    return write_csv(path, ["omega_i", "omega_f", "beta_hbar_omega", "bound"], rows)
