"""Quasi-static efficiencies of the Stirling, Carnot and Otto oscillator engines.

Cycle labelling follows the usual corner numbering:

* Stirling: 1=(w2,Th) -> 2=(w1,Th) isothermal, 2->3=(w1,Tc) isochoric,
  3->4=(w2,Tc) isothermal, 4->1 isochoric.
* Carnot: 1=(w1,Th) -> 2=(w2,Th) isothermal, 2->3=(w3,Tc) isentropic,
  3->4=(w4,Tc) isothermal, 4->1 isentropic.
* Otto: 1=(wc,Tc) -> 2=(wh,T1) isentropic, 2->3=(wh,Th) isochoric,
  3->4=(wc,T2) isentropic, 4->1 isochoric.

The non-equilibrium parameter ``mu_neq`` weights the isochoric heat taken in
on 4->1; ``mu_neq = 1/2`` is the textbook (overdamped) value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import thermo
from .core import NATURAL, Bath, Regime, UnitSystem, as_regime
from .tables import write_csv

_REL = 1e-12


class DegenerateCycleError(ValueError):
    """The cycle does no work or takes in no heat, so efficiency is 0/0."""


def _close(a: float, b: float, rtol: float = _REL) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b))


@dataclass(frozen=True)
class StirlingSpec:
    omega1: float
    omega2: float
    Tc: float
    Th: float

    def __post_init__(self):
        if not (0 < self.omega1 < self.omega2):
            raise ValueError("Stirling cycle needs 0 < omega1 < omega2")
        if not (0 < self.Tc < self.Th):
            raise ValueError("Stirling cycle needs 0 < Tc < Th")


@dataclass(frozen=True)
class CarnotSpec:
    """Carnot corners; ``omega3``/``omega4`` are fixed by the isentropes.

    The isentropic constraints force ``omega3 = omega2 Tc/Th`` and
    ``omega4 = omega1 Tc/Th``, so the cold isotherm runs from the lowest
    frequency ``omega3`` up to ``omega4``.
    """

    omega1: float
    omega2: float
    omega3: float
    omega4: float
    Tc: float
    Th: float

    def __post_init__(self):
        if not (self.omega1 > self.omega2 > 0):
            raise ValueError("Carnot cycle needs omega1 > omega2 > 0 on the hot isotherm")
        if not (0 < self.Tc < self.Th):
            raise ValueError("Carnot cycle needs 0 < Tc < Th")
        if not (_close(self.omega2 / self.Th, self.omega3 / self.Tc)
                and _close(self.omega1 / self.Th, self.omega4 / self.Tc)):
            raise ValueError("Carnot corners violate the isentropic constraints")

    @classmethod
    def from_hot_isotherm(cls, omega1: float, omega2: float, Tc: float, Th: float) -> "CarnotSpec":
        r = Tc / Th
        return cls(omega1, omega2, omega2 * r, omega1 * r, Tc, Th)


@dataclass(frozen=True)
class OttoSpec:
    omega_c: float
    omega_h: float
    Tc: float
    Th: float

    def __post_init__(self):
        if not (0 < self.omega_c < self.omega_h):
            raise ValueError("Otto cycle needs 0 < omega_c < omega_h")
        if not (0 < self.Tc < self.Th):
            raise ValueError("Otto cycle needs 0 < Tc < Th")
        if not self.Th > self.T1:
            raise ValueError("Otto cycle needs Th > Tc*omega_h/omega_c so that 2->3 heats")

    @property
    def T1(self) -> float:
        return self.Tc * self.omega_h / self.omega_c

    @property
    def T2(self) -> float:
        return self.Th * self.omega_c / self.omega_h


@dataclass(frozen=True)
class DimensionlessStirling:
    """``a = beta_c hbar omega1``, ``b = omega2/omega1``, ``c = beta_h/beta_c``."""

    a: float
    b: float
    c: float
    mu_neq: float = 0.5

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.b == 1.0:
            raise DegenerateCycleError("b = 1 gives a zero-work cycle")
        if not self.b > 1:
            raise ValueError("b must exceed 1")
        if not 0 < self.c < 1:
            raise ValueError("c must lie in (0, 1)")
        if not 0 <= self.mu_neq <= 1:
            raise ValueError("mu_neq must lie in [0, 1]")

    @classmethod
    def from_spec(cls, spec: StirlingSpec, mu_neq: float = 0.5,
                  units: UnitSystem = NATURAL) -> "DimensionlessStirling":
        a = units.hbar * spec.omega1 / (units.kB * spec.Tc)
        return cls(a, spec.omega2 / spec.omega1, spec.Tc / spec.Th, mu_neq)


def carnot_efficiency(spec: CarnotSpec) -> float:
    return 1.0 - spec.Tc / spec.Th


def otto_efficiency(spec: OttoSpec) -> float:
    return 1.0 - spec.omega_c / spec.omega_h


def stirling_classical(d: DimensionlessStirling) -> float:
    if d.b == 1.0:
        raise DegenerateCycleError("b = 1 gives a zero-work cycle")
    eta_c = 1.0 - d.c
    return eta_c / (1.0 + d.mu_neq * eta_c / math.log(d.b))


def _log1mexp(z: float) -> float:
    if z < 0.693:
        return math.log(-math.expm1(-z))
    return math.log1p(-math.exp(-z))


def log_sinh_ratio(x: float, y: float) -> float:
    """``ln(sinh x / sinh y)`` for positive arguments, overflow-free."""
    return (x - y) + _log1mexp(2.0 * x) - _log1mexp(2.0 * y)


def _scaled_log1mexp(z: float, s: float) -> float:
    # e^s ln(1 - e^{-z}) for s <= z
    if z < 0.693:
        return math.exp(s) * math.log(-math.expm1(-z))
    w = math.exp(-z)
    ratio = 1.0 if w < 1e-17 else -math.log1p(-w) / w
    return -math.exp(s - z) * ratio


def _scaled_bose(z: float, s: float) -> float:
    # e^s z/(e^z - 1) for s <= z
    return z * math.exp(s - z) / -math.expm1(-z)


def stirling_quantum(d: DimensionlessStirling) -> float:
    """Quantum Stirling efficiency ``(X - Y)/(X + Z)``.

    The terms linear in ``a`` cancel exactly between numerator and
    denominator, so both are assembled from the exponentially small
    remainders scaled by ``e^{ac}``; this keeps the ratio accurate deep in
    the quantum regime where ``X`` and ``Y`` agree to many digits.
    """
    a, b, c, mu = d.a, d.b, d.c, d.mu_neq
    s = a * c  # smallest of the exponents below
    L = lambda z: _scaled_log1mexp(z, s)  # noqa: E731
    n = lambda z: _scaled_bose(z, s)  # noqa: E731
    num = L(a * b * c) - L(a * c) - c * L(a * b) + c * L(a)
    den = (L(a * b * c) - L(a * c) + n(a * c) - (1.0 - mu) * n(a * b * c)
           - mu * a * b * c * math.exp(s - a * b) / -math.expm1(-a * b))
    if den == 0.0 or not math.isfinite(den):
        raise DegenerateCycleError(f"no heat intake for {d}")
    return num / den


def stirling_work(spec: StirlingSpec, regime: Regime | str = Regime.QUANTUM,
                  units: UnitSystem = NATURAL, method: str = "free_energy") -> float:
    """Net work done by the system over one quasi-static cycle."""
    hot, cold = Bath(spec.Th), Bath(spec.Tc)
    w12 = thermo.isothermal_work(spec.omega2, spec.omega1, hot, regime, units, method)
    w34 = thermo.isothermal_work(spec.omega1, spec.omega2, cold, regime, units, method)
    return w12 + w34


def stirling_heat_in(spec: StirlingSpec, regime: Regime | str = Regime.QUANTUM,
                     mu_neq: float = 0.5, units: UnitSystem = NATURAL,
                     method: str = "free_energy") -> float:
    """Heat taken in on the hot side: ``W_12 + dU_12 + dU_41``.

    ``dU_41 = 2 mu (<p^2>_1 - <p^2>_4)/2m = mu (U(w2,Th) - U(w2,Tc))``.
    """
    regime = as_regime(regime)
    hot, cold = Bath(spec.Th), Bath(spec.Tc)
    w12 = thermo.isothermal_work(spec.omega2, spec.omega1, hot, regime, units, method)
    U = thermo.internal_energy
    du12 = U(spec.omega1, hot, regime, units) - U(spec.omega2, hot, regime, units)
    du41 = mu_neq * (U(spec.omega2, hot, regime, units) - U(spec.omega2, cold, regime, units))
    return w12 + du12 + du41


def stirling_cycle_efficiency(spec: StirlingSpec, regime: Regime | str = Regime.QUANTUM,
                              mu_neq: float = 0.5, units: UnitSystem = NATURAL,
                              method: str = "free_energy") -> float:
    q_in = stirling_heat_in(spec, regime, mu_neq, units, method)
    if q_in <= 0:
        raise DegenerateCycleError("Stirling cycle takes in no heat")
    return stirling_work(spec, regime, units, method) / q_in


def carnot_cycle_efficiency(spec: CarnotSpec, regime: Regime | str = Regime.QUANTUM,
                            units: UnitSystem = NATURAL, method: str = "free_energy") -> float:
    """Work over hot-side heat, from free energies and internal energies."""
    regime = as_regime(regime)
    hot, cold = Bath(spec.Th), Bath(spec.Tc)
    U = thermo.internal_energy
    w12 = thermo.isothermal_work(spec.omega1, spec.omega2, hot, regime, units, method)
    w34 = thermo.isothermal_work(spec.omega3, spec.omega4, cold, regime, units, method)
    # no heat on the isentropes, so the work there is -dU
    w23 = U(spec.omega2, hot, regime, units) - U(spec.omega3, cold, regime, units)
    w41 = U(spec.omega4, cold, regime, units) - U(spec.omega1, hot, regime, units)
    q_in = w12 + U(spec.omega2, hot, regime, units) - U(spec.omega1, hot, regime, units)
    return (w12 + w23 + w34 + w41) / q_in


def otto_cycle_efficiency(spec: OttoSpec, regime: Regime | str = Regime.QUANTUM,
                          units: UnitSystem = NATURAL) -> float:
    regime = as_regime(regime)
    U = thermo.internal_energy
    u1 = U(spec.omega_c, Bath(spec.Tc), regime, units)
    u2 = U(spec.omega_h, Bath(spec.T1), regime, units)
    u3 = U(spec.omega_h, Bath(spec.Th), regime, units)
    u4 = U(spec.omega_c, Bath(spec.T2), regime, units)
    work = (u3 - u4) - (u2 - u1)
    return work / (u3 - u2)


@dataclass(frozen=True)
class RatioGrid:
    b: float
    mu_neq: float
    a: np.ndarray
    c: np.ndarray
    R: np.ndarray  # shape (len(a), len(c)); row-major over a

    def rows(self):
        for i, a in enumerate(self.a):
            for j, c in enumerate(self.c):
                yield (a, c, self.R[i, j])

    def to_csv(self, path):
        return write_csv(path, ["a", "c", "R"], self.rows())


def efficiency_ratio_grid(b: float, a_values, c_values, mu_neq: float = 0.5) -> RatioGrid:
    """Quantum-to-classical Stirling efficiency ratio over an ``(a, c)`` grid.

    A degenerate cell raises ``DegenerateCycleError`` naming the cell.
    """
    a_values = np.asarray(a_values, dtype=float)
    c_values = np.asarray(c_values, dtype=float)
    if not (np.all(np.isfinite(a_values)) and np.all(np.isfinite(c_values))):
        raise ValueError("grid axes must be finite")
    R = np.empty((a_values.size, c_values.size))
    for i, a in enumerate(a_values):
        for j, c in enumerate(c_values):
            d = DimensionlessStirling(float(a), b, float(c), mu_neq)
            try:
                R[i, j] = stirling_quantum(d) / stirling_classical(d)
            except DegenerateCycleError as exc:
                raise DegenerateCycleError(f"degenerate cell a={a}, c={c}: {exc}") from exc
    return RatioGrid(b, mu_neq, a_values, c_values, R)
