"""Finite-time bath switch at fixed trap frequency.

When the diffusion constant is ramped linearly ``D0 -> D1`` over ``tau``, the
variances at the end of the ramp interpolate between the two equilibria:

    <q^2>(tau) = alpha <q^2>_0 + (1 - alpha) <q^2>_1
    <p^2>(tau) = beta_p <p^2>_0 + (1 - beta_p) <p^2>_1

with ``alpha = (1/tau) int_0^tau (u^2 + m^2 omega^2 v^2)`` and
``beta_p = (1/tau) int_0^tau (m^2 vdot^2 + udot^2/omega^2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .core import SecondMoments
from .dynamics import QuadratureError, _damped_cs
from .tables import write_csv

# |kappa^2 - omega^2|/kappa^2 below which the gamma-function series is used
SERIES_BRANCH = 0.25
_SERIES_TERMS = 60


@dataclass(frozen=True)
class DissipationSummary:
    alpha_q: float
    beta_p: float

    @property
    def mu_neq(self) -> float:
        return 1.0 - 0.5 * (self.alpha_q + self.beta_p)


def _check(kappa, omega, tau):
    if not (kappa > 0 and omega > 0 and tau > 0):
        raise ValueError("kappa, omega and tau must all be positive")


def _series(kappa, omega, tau):
    # Expansion in G = (kappa^2 - omega^2)/kappa^2 of the window integrals;
    # each power of G integrates to a regularized incomplete gamma function.
    # Terms behave like (2 tau sqrt|kappa^2 - omega^2|)^{2n}/(2n)!, so the sum
    # converges quickly whenever |G| < 1 or that argument is small.
    K = kappa * tau
    G = (kappa * kappa - omega * omega) / (kappa * kappa)
    n = np.arange(1, _SERIES_TERMS + 1)
    with np.errstate(divide="ignore"):
        log_even = np.log(special.gammainc(2 * n, 2 * K))
        log_odd = np.log(special.gammainc(2 * n + 1, 2 * K))
    if G == 0.0:
        scale = np.where(n == 1, 0.0, -np.inf)
        sign = 1.0
    else:
        scale = (n - 1) * math.log(abs(G))
        sign = np.where((n - 1) % 2 == 1, math.copysign(1.0, G), 1.0)
    even = sign * np.exp(log_even + scale)
    odd = sign * np.exp(log_odd + scale)
    F = -math.expm1(-2.0 * K) / (2.0 * K)
    alpha = F + float(np.sum(even + odd)) / (2.0 * K)
    beta = F + float(np.sum(odd - even)) / (2.0 * K)
    return alpha, beta


def _use_series(kappa, omega, tau):
    s = kappa * kappa - omega * omega
    return abs(s) < SERIES_BRANCH * kappa * kappa or 2.0 * tau * math.sqrt(abs(s)) < 1.0


def _one_minus_exp(z):
    return -np.expm1(-z)


def _closed(kappa, omega, tau):
    r = np.sqrt(complex(kappa * kappa - omega * omega))
    x = (kappa + r) * tau
    y = (kappa - r) * tau
    s = (x + y).real   # 2 kappa tau
    p = (x * y).real   # omega^2 tau^2, real
    d2 = ((x - y) ** 2).real
    cross = 4.0 * p / s * _one_minus_exp(s)
    # x/(2y)(1-e^{-2y}) + y/(2x)(1-e^{-2x}) is a conjugate-pair sum when underdamped
    pair = (x / (2.0 * y) * _one_minus_exp(2.0 * y) + y / (2.0 * x) * _one_minus_exp(2.0 * x)).real
    mean_exp = 0.5 * (np.exp(-2.0 * y) + np.exp(-2.0 * x)).real
    alpha = (s * pair - cross).real / d2
    beta = (s * (1.0 - mean_exp) - cross).real / d2
    return float(alpha), float(beta)


def alpha_beta_closed(kappa: float, omega: float, tau: float) -> DissipationSummary:
    """Closed-form relaxation fractions at the end of a linear bath ramp.

    Uses ``x, y = (kappa +- sqrt(kappa^2 - omega^2)) tau``; near critical
    damping, where the closed form is 0/0, an incomplete-gamma series in
    ``(kappa^2 - omega^2)/kappa^2`` takes over.
    """
    _check(kappa, omega, tau)
    if _use_series(kappa, omega, tau):
        a, b = _series(kappa, omega, tau)
    else:
        a, b = _closed(kappa, omega, tau)
    return DissipationSummary(min(max(a, 0.0), 1.0), min(max(b, 0.0), 1.0))


def _window_breaks(kappa, omega, t0, t1):
    # geometric breakpoints on the slowest and fastest decay scales
    s = kappa * kappa - omega * omega
    rates = [kappa]
    if s > 0:
        g = math.sqrt(s)
        rates = [kappa + g, omega * omega / (kappa + g)]
    pts = set()
    for rate in rates:
        h = 0.5 / rate
        while h < t1:
            if h > t0:
                pts.add(h)
            h *= 2.0
    if s < 0:
        period = 2.0 * math.pi / math.sqrt(-s)
        n = (t1 - t0) / period
        if n < 2000:
            pts.update(t0 + period * np.arange(1, int(n) + 1))
    return sorted(p for p in pts if t0 < p < t1)


def alpha_beta_quadrature(kappa: float, omega: float, tau: float, t: float | None = None,
                          m: float = 1.0, rtol: float = 1e-12) -> DissipationSummary:
    """``alpha(t)``, ``beta_p(t)`` by direct quadrature over the window ``[t - tau, t]``."""
    _check(kappa, omega, tau)
    t = tau if t is None else t
    if t < tau * (1.0 - 1e-15):
        raise ValueError("need t >= tau")
    t0 = max(t - tau, 0.0)

    def integrand(tp):
        eC, eS = _damped_cs(kappa, omega, tp)
        u = eC + kappa * eS
        v = eS / m
        udot = -omega * omega * eS
        vdot = (eC - kappa * eS) / m
        return np.array([u * u + (m * omega * v) ** 2, (m * vdot) ** 2 + (udot / omega) ** 2])

    res, err, info = integrate.quad_vec(integrand, t0, t, epsabs=1e-300, epsrel=rtol,
                                        points=_window_breaks(kappa, omega, t0, t) or None,
                                        limit=5000, full_output=True)
    if info.status != 0:
        raise QuadratureError(f"alpha/beta quadrature did not converge (status {info.status})")
    return DissipationSummary(float(res[0]) / tau, float(res[1]) / tau)


def interp_moments(initial: SecondMoments, final: SecondMoments,
                   summary: DissipationSummary) -> SecondMoments:
    """Moments at the end of the ramp, interpolated between the two steady states.

    ``qp`` is set to zero; the exact ramp leaves a small nonzero ``<qp>``.
    """
    a, b = summary.alpha_q, summary.beta_p
    return SecondMoments(a * initial.q2 + (1.0 - a) * final.q2, 0.0,
                         b * initial.p2 + (1.0 - b) * final.p2)


def asymptotic_summary(kappa: float, omega: float, tau: float, regime: str,
                       simplified: bool = True) -> DissipationSummary:
    """Limiting forms of ``alpha``, ``beta_p``.

    ``overdamped`` (kappa >> omega): ``alpha = (1 - e^{-2y})/2y`` with
    ``y = omega^2 tau/2 kappa`` and ``beta_p = (1 - e^{-2x})/2x`` with
    ``x = 2 kappa tau``. The alpha form holds to ~0.1% for kappa/omega >= 30;
    beta_p carries an absolute error up to ``omega^2/4 kappa^2``.

    ``underdamped`` (kappa << omega, kappa tau << 1):
    ``1 - kappa tau (1 -+ sinc^2(omega tau))``. With ``simplified=False`` the
    leading ``1 - kappa tau`` is resummed to ``(1 - e^{-2 kappa tau})/2 kappa tau``.
    """
    _check(kappa, omega, tau)
    ratio = kappa / omega
    if regime == "overdamped":
        if ratio < 10:
            warnings.warn(f"overdamped asymptotics used at kappa/omega = {ratio:.3g} < 10",
                          RuntimeWarning, stacklevel=2)
        y = omega * omega * tau / (2.0 * kappa)
        x = 2.0 * kappa * tau
        return DissipationSummary(-math.expm1(-2.0 * y) / (2.0 * y), -math.expm1(-2.0 * x) / (2.0 * x))
    if regime == "underdamped":
        if ratio > 0.1:
            warnings.warn(f"underdamped asymptotics used at kappa/omega = {ratio:.3g} > 0.1",
                          RuntimeWarning, stacklevel=2)
        kt = kappa * tau
        sinc2 = (math.sin(omega * tau) / (omega * tau)) ** 2
        if simplified:
            return DissipationSummary(1.0 - kt * (1.0 - sinc2), 1.0 - kt * (1.0 + sinc2))
        lead = -math.expm1(-2.0 * kt) / (2.0 * kt)
        return DissipationSummary(lead + kt * sinc2, lead - kt * sinc2)
    raise ValueError(f"unknown regime {regime!r} (expected 'overdamped' or 'underdamped')")


@dataclass(frozen=True)
class SwitchSweep:
    kappa_over_omega: np.ndarray
    kappa_tau: np.ndarray
    alpha: np.ndarray  # shape (len(kappa_over_omega), len(kappa_tau))
    beta: np.ndarray

    def rows(self):
        for i, r in enumerate(self.kappa_over_omega):
            for j, kt in enumerate(self.kappa_tau):
                a, b = self.alpha[i, j], self.beta[i, j]
                yield (r, kt, a, b, 1.0 - 0.5 * (a + b))

    def to_csv(self, path):
        return write_csv(path, ["kappa_over_omega", "kappa_tau", "alpha", "beta", "mu"], self.rows())


def sweep(kappa_over_omega, kappa_tau, omega: float = 1.0) -> SwitchSweep:
    ratios = np.asarray(kappa_over_omega, dtype=float)
    kts = np.asarray(kappa_tau, dtype=float)
    A = np.empty((ratios.size, kts.size))
    B = np.empty_like(A)
    for i, r in enumerate(ratios):
        kappa = r * omega
        for j, kt in enumerate(kts):
            s = alpha_beta_closed(kappa, omega, kt / kappa)
            A[i, j], B[i, j] = s.alpha_q, s.beta_p
    return SwitchSweep(ratios, kts, A, B)
