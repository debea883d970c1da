"""Stirling engine at maximum power in the slow-driving (Sigma/tau) regime.

Power and efficiency with isothermal branch durations ``tau_h``, ``tau_c``:

    P   = [(Th - Tc) dS - Th Sh/tau_h - Tc Sc/tau_c]/(tau_h + tau_c)
    eta = [(Th - Tc) dS - Th Sh/tau_h - Tc Sc/tau_c]
          / [mu kB (Th - Tc) + Th dS - Th Sh/tau_h]

Isochoric branches are taken as instantaneous in the power budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import perturb, thermo
from .core import NATURAL, Bath, Oscillator, Regime, UnitSystem
from .efficiency import StirlingSpec
from .tables import write_csv


@dataclass(frozen=True)
class MaxPowerInputs:
    Tc: float
    Th: float
    Sigma_h: float
    Sigma_c: float
    DeltaS: float
    mu_neq: float = 0.0
    kB: float = 1.0

    def __post_init__(self):
        if not (0 < self.Tc < self.Th):
            raise ValueError("need 0 < Tc < Th")
        if not (self.Sigma_h > 0 and self.Sigma_c > 0 and self.DeltaS > 0 and self.kB > 0):
            raise ValueError("Sigma_h, Sigma_c, DeltaS and kB must be positive")
        if self.mu_neq < 0:
            raise ValueError("mu_neq must be non-negative")

    @property
    def eta_c(self) -> float:
        return 1.0 - self.Tc / self.Th

    @property
    def sigma_ratio(self) -> float:
        """``sqrt(Tc Sc/(Th Sh))``."""
        return math.sqrt(self.Tc * self.Sigma_c / (self.Th * self.Sigma_h))

    @property
    def log_b(self) -> float:
        """``DeltaS/kB``, which is ``ln(omega2/omega1)`` for the classical cycle."""
        return self.DeltaS / self.kB

    @classmethod
    def from_stirling(cls, spec: StirlingSpec, osc: Oscillator, regime: str = "overdamped",
                      limit: str = "classical", mu_neq: float = 0.0, protocol: str = "optimal",
                      units: UnitSystem = NATURAL) -> "MaxPowerInputs":
        """Sigma coefficients of the two isothermal branches from the slow-driving theory.

        The hot branch runs ``omega2 -> omega1`` at ``Th`` and the cold branch
        ``omega1 -> omega2`` at ``Tc``. The entropy change is the classical
        ``kB ln(omega2/omega1)``, which both isotherms share.
        """
        hot, cold = Bath(spec.Th), Bath(spec.Tc)

        def sigma(wi, wf, bath):
            if protocol == "optimal":
                path = perturb.optimal_protocol(wi, wf, bath, regime, limit, units).schedule
            elif protocol == "linear":
                path = perturb.linear_path(wi, wf)
            else:
                raise ValueError(f"unknown protocol {protocol!r}")
            return perturb.irreversible_heat(path, 1.0, bath, osc, regime, limit, units).Sigma

        dS = (thermo.entropy(spec.omega1, hot, Regime.CLASSICAL, units)
              - thermo.entropy(spec.omega2, hot, Regime.CLASSICAL, units))
        expected = units.kB * math.log(spec.omega2 / spec.omega1)
        if abs(dS - expected) > 1e-12 * abs(expected):
            raise AssertionError("classical entropy change differs from kB ln b")
        return cls(spec.Tc, spec.Th, sigma(spec.omega2, spec.omega1, hot),
                   sigma(spec.omega1, spec.omega2, cold), dS, mu_neq, units.kB)


@dataclass(frozen=True)
class MaxPowerResult:
    tau_h_star: float
    tau_c_star: float
    P_max: float
    eta_star: float


def _check_times(tau_h, tau_c):
    if not (tau_h > 0 and tau_c > 0):
        raise ValueError("branch durations must be positive")


def _net_work(inp: MaxPowerInputs, tau_h, tau_c):
    return ((inp.Th - inp.Tc) * inp.DeltaS - inp.Th * inp.Sigma_h / tau_h
            - inp.Tc * inp.Sigma_c / tau_c)


def power(inp: MaxPowerInputs, tau_h: float, tau_c: float) -> float:
    """Cycle power; negative when dissipation outweighs the reversible work."""
    _check_times(tau_h, tau_c)
    return _net_work(inp, tau_h, tau_c) / (tau_h + tau_c)


def eta_from_times(inp: MaxPowerInputs, tau_h: float, tau_c: float) -> float:
    _check_times(tau_h, tau_c)
    heat_in = (inp.mu_neq * inp.kB * (inp.Th - inp.Tc) + inp.Th * inp.DeltaS
               - inp.Th * inp.Sigma_h / tau_h)
    return _net_work(inp, tau_h, tau_c) / heat_in


def optimal_times(inp: MaxPowerInputs) -> tuple[float, float]:
    """``tau_h* = 2 Th Sh (1 + r)/((Th - Tc) dS)``, ``tau_c* = 2 Tc Sc (1 + 1/r)/((Th - Tc) dS)``."""
    r = inp.sigma_ratio
    scale = 2.0 / ((inp.Th - inp.Tc) * inp.DeltaS)
    return scale * inp.Th * inp.Sigma_h * (1.0 + r), scale * inp.Tc * inp.Sigma_c * (1.0 + 1.0 / r)


def eta_at_max_power(inp: MaxPowerInputs, method: str = "closed") -> float:
    """Efficiency at the power maximum.

    closed: ``eta_c (1 + r)/[2(1 + r) - eta_c + 2 mu eta_c (1 + r)/(dS/kB)]``
    with ``r = sqrt(Tc Sc/(Th Sh))``; ``substitution`` evaluates the
    efficiency at ``optimal_times``.
    """
    if method == "substitution":
        return eta_from_times(inp, *optimal_times(inp))
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    r = inp.sigma_ratio
    ec = inp.eta_c
    return ec * (1.0 + r) / (2.0 * (1.0 + r) - ec + 2.0 * inp.mu_neq * ec * (1.0 + r) / inp.log_b)


def maximize(inp: MaxPowerInputs) -> MaxPowerResult:
    th, tc = optimal_times(inp)
    return MaxPowerResult(th, tc, power(inp, th, tc), eta_at_max_power(inp))


def eta_ca(eta_c: float) -> float:
    return 1.0 - math.sqrt(1.0 - eta_c)


def stirling_eta_mu(eta_c: float, mu_neq: float, log_b: float) -> float:
    """Quasi-static Stirling efficiency with heat-intake weight ``mu_neq``."""
    return eta_c / (1.0 + mu_neq * eta_c / log_b)


@dataclass(frozen=True)
class BoundsReport:
    eta_c: float
    eta_CA: float
    eta_s: float
    lower: float
    upper: float
    regime_flag: bool  # mu > ln(b)/2, so that upper <= eta_c/2


def bounds(eta_c: float, mu_neq: float, log_b: float) -> BoundsReport:
    """Range of the max-power efficiency over all ``Sigma_c/Sigma_h``.

    With ``eta_s`` the quasi-static mu-modified Stirling efficiency the
    range is ``[eta_s/2, eta_s/(2 - eta_s)]``; the ends are reached as the
    ratio goes to infinity and to zero.
    """
    if not 0 < eta_c < 1:
        raise ValueError("eta_c must lie in (0, 1)")
    es = stirling_eta_mu(eta_c, mu_neq, log_b)
    return BoundsReport(eta_c, eta_ca(eta_c), es, 0.5 * es, es / (2.0 - es),
                        mu_neq > 0.5 * log_b)


def bounds_and_special_values(inp: MaxPowerInputs) -> BoundsReport:
    return bounds(inp.eta_c, inp.mu_neq, inp.log_b)


def symmetric_eta(eta_c: float, mu_neq: float, log_b: float) -> float:
    """Max-power efficiency for equal ``Sigma_c = Sigma_h``: ``eta_CA/(1 + 2 mu eta_CA/ln b)``."""
    e = eta_ca(eta_c)
    return e / (1.0 + 2.0 * mu_neq * e / log_b)


@dataclass(frozen=True)
class FigureGrid:
    b: float
    rows: list

    def to_csv(self, path):
        return write_csv(path, ["mu", "eta_c", "lower", "upper", "eta_CA", "eta_c_half"], self.rows)


def figure_grid(b: float = 2.05, mu_list=(0.001, 0.1, 0.2, 0.4), eta_c_values=None) -> FigureGrid:
    """Bounds on the max-power efficiency against ``eta_c`` for several ``mu``."""
    if not b > 1:
        raise ValueError("b must exceed 1")
    if eta_c_values is None:
        eta_c_values = np.linspace(0.01, 0.99, 99)
    L = math.log(b)
    rows = []
    for mu in mu_list:
        for ec in eta_c_values:
            rep = bounds(float(ec), float(mu), L)
            rows.append((float(mu), float(ec), rep.lower, rep.upper, rep.eta_CA, 0.5 * float(ec)))
    return FigureGrid(b, rows)
