"""Equilibrium state functions of the harmonic oscillator and Gaussian entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate

from .core import (
    NATURAL,
    Bath,
    InvalidMomentsError,
    Regime,
    SecondMoments,
    UnitSystem,
    as_regime,
    uncertainty_defect,
)

# sigma in [-ENTROPY_TOL, 0] is rounded up to the pure-state value
ENTROPY_TOL = 1e-9


@dataclass(frozen=True)
class StateFunctionSet:
    U: float
    F: float
    S: float
    n: float | None = None


def _x(omega: float, bath: Bath, units: UnitSystem) -> float:
    if not omega > 0:
        raise ValueError(f"frequency must be positive, got {omega}")
    return units.hbar * omega * bath.beta(units)


def _log1mexp(x: float) -> float:
    # ln(1 - e^{-x}) for x > 0
    if x < 0.693:
        return math.log(-math.expm1(-x))
    return math.log1p(-math.exp(-x))


def bose_occupation(omega: float, bath: Bath, units: UnitSystem = NATURAL) -> float:
    x = _x(omega, bath, units)
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def internal_energy(omega: float, bath: Bath, regime: Regime | str = Regime.QUANTUM,
                    units: UnitSystem = NATURAL) -> float:
    if as_regime(regime) is Regime.CLASSICAL:
        return bath.kT(units)
    return units.hbar * omega * (bose_occupation(omega, bath, units) + 0.5)


def free_energy(omega: float, bath: Bath, regime: Regime | str = Regime.QUANTUM,
                units: UnitSystem = NATURAL) -> float:
    x = _x(omega, bath, units)
    kT = bath.kT(units)
    if as_regime(regime) is Regime.CLASSICAL:
        return kT * math.log(x)
    # ln(2 sinh(x/2)) = x/2 + ln(1 - e^{-x})
    return kT * (0.5 * x + _log1mexp(x))


def entropy(omega: float, bath: Bath, regime: Regime | str = Regime.QUANTUM,
            units: UnitSystem = NATURAL) -> float:
    """Thermal entropy.

    The classical value is a differential entropy and keeps ``hbar`` inside
    the logarithm, so only differences are physical.
    """
    x = _x(omega, bath, units)
    if as_regime(regime) is Regime.CLASSICAL:
        return units.kB * (1.0 - math.log(x))
    # (n+1)ln(n+1) - n ln n rewritten as x*n - ln(1 - e^{-x})
    return units.kB * (x * bose_occupation(omega, bath, units) - _log1mexp(x))


def state_functions(omega: float, bath: Bath, regime: Regime | str = Regime.QUANTUM,
                    units: UnitSystem = NATURAL) -> StateFunctionSet:
    regime = as_regime(regime)
    n = bose_occupation(omega, bath, units) if regime is Regime.QUANTUM else None
    return StateFunctionSet(
        U=internal_energy(omega, bath, regime, units),
        F=free_energy(omega, bath, regime, units),
        S=entropy(omega, bath, regime, units),
        n=n,
    )


def entropy_from_defect(sigma: float, kB: float = 1.0, tol: float = ENTROPY_TOL) -> float:
    """``kB[(sigma+1)ln(sigma+1) - sigma ln sigma]``."""
    if sigma < -tol:
        raise InvalidMomentsError(f"state violates the uncertainty relation (sigma={sigma})")
    if sigma <= 0.0:
        return 0.0
    return kB * ((sigma + 1.0) * math.log1p(sigma) - sigma * math.log(sigma))


def entropy_gaussian(mom: SecondMoments, units: UnitSystem = NATURAL,
                     tol: float = ENTROPY_TOL) -> float:
    """Von Neumann entropy of the zero-mean Gaussian state with moments ``mom``."""
    return entropy_from_defect(uncertainty_defect(mom, units), units.kB, tol)


def quasistatic_isothermal_heat(omega_i: float, omega_f: float, bath: Bath,
                                regime: Regime | str = Regime.QUANTUM,
                                units: UnitSystem = NATURAL) -> float:
    """Heat absorbed (= work done) in a reversible isothermal ``omega_i -> omega_f``."""
    if omega_i == omega_f:
        return 0.0
    regime = as_regime(regime)
    if regime is Regime.CLASSICAL:
        return bath.kT(units) * math.log(omega_i / omega_f)
    return bath.T * (entropy(omega_f, bath, regime, units) - entropy(omega_i, bath, regime, units))


def isothermal_work(omega_i: float, omega_f: float, bath: Bath,
                    regime: Regime | str = Regime.QUANTUM, units: UnitSystem = NATURAL,
                    method: str = "free_energy") -> float:
    """Work done by the system along a reversible isothermal ``omega_i -> omega_f``.

    ``method="quadrature"`` integrates ``-m omega <q^2>_ss d omega`` directly,
    which with steady-state moments reduces to ``-hbar (n + 1/2)`` (quantum)
    or ``-kB T / omega`` (classical) and is independent of the mass.
    """
    regime = as_regime(regime)
    if method == "free_energy":
        return (free_energy(omega_i, bath, regime, units)
                - free_energy(omega_f, bath, regime, units))
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    if regime is Regime.CLASSICAL:
        kT = bath.kT(units)

        def integrand(w):
            return kT / w
    else:
        beta = bath.beta(units)
        hbar = units.hbar

        def integrand(w):
            return 0.5 * hbar / math.tanh(0.5 * beta * hbar * w)
    val, _ = integrate.quad(integrand, omega_i, omega_f, epsabs=0.0, epsrel=1e-13, limit=200)
    return -val
