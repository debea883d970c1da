"""Physical parameters, units and the Gaussian second-moment state.

Everything downstream works with zero-mean Gaussian states, so a state is
fully described by the variance triple ``(<q^2>, <qp>, <p^2>)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

HBAR_SI = 1.054571817e-34
KB_SI = 1.380649e-23

# relative slack for det >= (hbar/2)^2 on integrated states
UNCERTAINTY_RTOL = 1e-9


class InvalidMomentsError(ValueError):
    """Raised when a variance triple is not a valid covariance matrix."""


class Regime(str, enum.Enum):
    CLASSICAL = "classical"
    QUANTUM = "quantum"


def as_regime(regime: Regime | str) -> Regime:
    return regime if isinstance(regime, Regime) else Regime(str(regime).lower())


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = 1.0
    kB: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.kB > 0):
            raise ValueError("hbar and kB must be strictly positive")

    @classmethod
    def natural(cls) -> "UnitSystem":
        return cls()

    @classmethod
    def si(cls) -> "UnitSystem":
        return cls(hbar=HBAR_SI, kB=KB_SI)

    @classmethod
    def named(cls, name: str) -> "UnitSystem":
        name = name.lower()
        if name == "natural":
            return cls.natural()
        if name == "si":
            return cls.si()
        raise ValueError(f"unknown unit system {name!r} (expected 'natural' or 'si')")


NATURAL = UnitSystem()


@dataclass(frozen=True)
class Oscillator:
    """Brownian particle of mass ``m`` with momentum damping rate ``kappa``.

    The drift on the momentum is ``-2*kappa*p``; the trap stiffness
    ``m*omega**2`` is a control parameter and is not stored here.
    """

    m: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"mass must be positive, got {self.m}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")

    def stiffness(self, omega: float) -> float:
        return self.m * omega * omega


@dataclass(frozen=True)
class Bath:
    T: float

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"bath temperature must be finite and positive, got {self.T}")

    @classmethod
    def from_beta(cls, beta: float, units: UnitSystem = NATURAL) -> "Bath":
        if not (beta > 0 and math.isfinite(beta)):
            raise ValueError(f"beta must be finite and positive, got {beta}")
        return cls(1.0 / (units.kB * beta))

    def beta(self, units: UnitSystem = NATURAL) -> float:
        return 1.0 / (units.kB * self.T)

    def kT(self, units: UnitSystem = NATURAL) -> float:
        return units.kB * self.T


@dataclass(frozen=True)
class SecondMoments:
    q2: float
    qp: float
    p2: float

    def __post_init__(self):
        if self.q2 < 0 or self.p2 < 0:
            raise InvalidMomentsError(f"negative variance in {self}")

    @property
    def det(self) -> float:
        return self.q2 * self.p2 - self.qp * self.qp

    def as_array(self) -> np.ndarray:
        return np.array([self.q2, self.qp, self.p2])

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.q2, self.qp], [self.qp, self.p2]])

    @classmethod
    def from_array(cls, x) -> "SecondMoments":
        return cls(float(x[0]), float(x[1]), float(x[2]))

    @classmethod
    def from_matrix(cls, v) -> "SecondMoments":
        return cls(float(v[0, 0]), 0.5 * float(v[0, 1] + v[1, 0]), float(v[1, 1]))

    def scaled(self, factor: float) -> "SecondMoments":
        return SecondMoments(self.q2 * factor, self.qp * factor, self.p2 * factor)

    def energy(self, m: float, omega: float) -> float:
        """Mean energy ``<p^2>/2m + m omega^2 <q^2>/2``."""
        return 0.5 * self.p2 / m + 0.5 * m * omega * omega * self.q2

    def satisfies_uncertainty(self, units: UnitSystem = NATURAL,
                              rtol: float = UNCERTAINTY_RTOL) -> bool:
        return self.det >= 0.25 * units.hbar**2 * (1.0 - rtol)


def _check_omega(omega: float) -> None:
    if not omega > 0:
        raise ValueError(f"frequency must be positive, got {omega}")


def diffusion_coefficient(osc: Oscillator, omega: float, bath: Bath,
                          regime: Regime | str = Regime.QUANTUM,
                          units: UnitSystem = NATURAL) -> float:
    """Momentum diffusion constant of the bath.

    Quantum: ``2 m hbar omega kappa (n + 1/2)``; classical: ``2 m kappa kB T``.
    The noise force has correlator ``2 D delta(t - t')``.
    """
    _check_omega(omega)
    regime = as_regime(regime)
    if regime is Regime.CLASSICAL:
        return 2.0 * osc.m * osc.kappa * bath.kT(units)
    x = units.hbar * omega * bath.beta(units)
    # hbar*omega*(n + 1/2) = (hbar*omega/2) coth(x/2)
    return osc.m * osc.kappa * units.hbar * omega * _coth(0.5 * x)


def _coth(x: float) -> float:
    if x > 20.0:
        return 1.0 + 2.0 * math.exp(-2.0 * x)
    return 1.0 / math.tanh(x)


def steady_state_moments(osc: Oscillator, omega: float, D: float) -> SecondMoments:
    if not D > 0:
        raise ValueError(f"diffusion constant must be positive, got {D}")
    _check_omega(omega)
    p2 = D / (2.0 * osc.kappa)
    return SecondMoments(p2 / (osc.m * omega) ** 2, 0.0, p2)


def thermal_moments(osc: Oscillator, omega: float, bath: Bath,
                    regime: Regime | str = Regime.QUANTUM,
                    units: UnitSystem = NATURAL) -> SecondMoments:
    """Equilibrium moments at ``(omega, T)``."""
    return steady_state_moments(osc, omega, diffusion_coefficient(osc, omega, bath, regime, units))


def uncertainty_defect(mom: SecondMoments, units: UnitSystem = NATURAL) -> float:
    """``sqrt(det V)/hbar - 1/2``; equals the Bose occupation for thermal states."""
    det = mom.det
    if det < 0:
        raise InvalidMomentsError(f"negative covariance determinant {det}")
    return math.sqrt(det) / units.hbar - 0.5
