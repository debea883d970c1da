"""Classical and quantum Brownian heat engines: steady-state efficiencies,
moment dynamics, finite-time corrections, maximum power and a Langevin
Monte Carlo oracle."""

from .core import (
    NATURAL,
    Bath,
    InvalidMomentsError,
    Oscillator,
    Regime,
    SecondMoments,
    UnitSystem,
    diffusion_coefficient,
    steady_state_moments,
    thermal_moments,
    uncertainty_defect,
)

__all__ = [
    "NATURAL",
    "Bath",
    "InvalidMomentsError",
    "Oscillator",
    "Regime",
    "SecondMoments",
    "UnitSystem",
    "diffusion_coefficient",
    "steady_state_moments",
    "thermal_moments",
    "uncertainty_defect",
]
