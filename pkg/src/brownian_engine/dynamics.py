"""Second-moment dynamics under a time-dependent trap frequency and bath.

The homogeneous Langevin system ``dq/dt = p/m``, ``dp/dt = -2 kappa p - m omega(t)^2 q``
has fundamental matrix

    M(t) = [[u, v], [m du/dt, m dv/dt]],   M(0) = identity,

where ``u`` and ``v`` both solve ``x'' + 2 kappa x' + omega(t)^2 x = 0``.
Three frequency schedules have closed-form ``M``: constant, ``omega^2`` linear
in time (Airy-type, via ``J_{+-1/3}``) and ``omega^2`` exponential in time
(via ``J_{+-nu}``). Anything else, and any closed form outside its validated
range, is integrated numerically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from . import bessel
from .core import NATURAL, Bath, Oscillator, Regime, SecondMoments, UnitSystem, as_regime
from .tables import write_csv

FD_STEP = 1e-6
ODE_RTOL = 1e-10
NEAR_INTEGER_ORDER = 1e-3


class QuadratureError(RuntimeError):
    pass


class StiffnessError(RuntimeError):
    pass


class ClosedFormFallbackWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------- schedules


def _central_difference(f, t, span):
    h = FD_STEP * span
    return (f(t + h) - f(t - h)) / (2.0 * h)


@dataclass(frozen=True, eq=False)
class FrequencySchedule:
    """Trap frequency ``omega(t)``.

    ``linear_ramp``: ``omega^2 = omega0^2 (1 + r t/tau_r)``;
    ``exponential_ramp``: ``omega^2 = omega0^2 exp(r t/tau_r)``. Both hold
    their final value for ``t > tau_r``.
    """

    kind: str
    omega0: float
    ramp_rate: float = 0.0
    ramp_duration: float = 1.0
    times: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)
    func: Optional[Callable[[float], float]] = field(default=None, repr=False)
    dfunc: Optional[Callable[[float], float]] = field(default=None, repr=False)
    _interp: Optional[PchipInterpolator] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("constant", "linear_ramp", "exponential_ramp", "tabulated", "function"):
            raise ValueError(f"unknown frequency schedule kind {self.kind!r}")
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        if not self.ramp_duration > 0:
            raise ValueError("ramp_duration must be positive")
        if self.kind == "linear_ramp" and not 1.0 + self.ramp_rate > 0:
            raise ValueError("linear ramp drives omega^2 through zero (need 1 + r > 0)")
        if self.kind == "tabulated":
            t = np.asarray(self.times, dtype=float)
            w = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.size < 2 or t.shape != w.shape or np.any(np.diff(t) <= 0):
                raise ValueError("tabulated schedule needs increasing times and matching values")
            if np.any(w <= 0):
                raise ValueError("tabulated frequencies must be positive")
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "values", w)
            object.__setattr__(self, "_interp", PchipInterpolator(t, w, extrapolate=False))
        if self.kind == "function":
            if self.func is None:
                raise ValueError("function schedule needs func")
            probe = [self.func(x) for x in np.linspace(0.0, self.ramp_duration, 33)]
            if min(probe) <= 0:
                raise ValueError("frequency function must stay positive")

    @classmethod
    def constant(cls, omega):
        return cls("constant", omega)

    @classmethod
    def linear_ramp(cls, omega0, ramp_rate, ramp_duration):
        return cls("linear_ramp", omega0, ramp_rate, ramp_duration)

    @classmethod
    def exponential_ramp(cls, omega0, ramp_rate, ramp_duration):
        return cls("exponential_ramp", omega0, ramp_rate, ramp_duration)

    @classmethod
    def tabulated(cls, times, values):
        times = np.asarray(times, dtype=float)
        return cls("tabulated", float(values[0]), 0.0, float(times[-1] - times[0]),
                   times=times, values=np.asarray(values, dtype=float))

    @classmethod
    def function(cls, func, dfunc=None, duration=1.0):
        return cls("function", float(func(0.0)), 0.0, duration, func=func, dfunc=dfunc)

    @property
    def breakpoints(self) -> tuple:
        if self.kind in ("linear_ramp", "exponential_ramp"):
            return (self.ramp_duration,)
        if self.kind == "tabulated":
            return (float(self.times[-1]),)
        return ()

    def _clip(self, t):
        return min(max(t, 0.0), self.ramp_duration)

    def value(self, t: float) -> float:
        k = self.kind
        if k == "constant":
            return self.omega0
        if k == "linear_ramp":
            return self.omega0 * math.sqrt(1.0 + self.ramp_rate * self._clip(t) / self.ramp_duration)
        if k == "exponential_ramp":
            return self.omega0 * math.exp(0.5 * self.ramp_rate * self._clip(t) / self.ramp_duration)
        if k == "tabulated":
            return float(self._interp(min(max(t, self.times[0]), self.times[-1])))
        return float(self.func(t))

    __call__ = value

    def derivative(self, t: float) -> float:
        k = self.kind
        if k == "constant":
            return 0.0
        if k in ("linear_ramp", "exponential_ramp") and not 0.0 <= t <= self.ramp_duration:
            return 0.0
        if k == "linear_ramp":
            w = self.value(t)
            return 0.5 * self.omega0**2 * self.ramp_rate / (self.ramp_duration * w)
        if k == "exponential_ramp":
            return 0.5 * self.ramp_rate / self.ramp_duration * self.value(t)
        if k == "tabulated":
            if not self.times[0] <= t <= self.times[-1]:
                return 0.0
            return float(self._interp.derivative()(t))
        if self.dfunc is not None:
            return float(self.dfunc(t))
        return _central_difference(self.func, t, self.ramp_duration)

    def omega2(self, t: float) -> float:
        w = self.value(t)
        return w * w

    def rescaled(self, tau: float) -> "FrequencySchedule":
        """The same path run over ``[0, tau]`` instead of ``[0, ramp_duration]``."""
        scale = self.ramp_duration / tau
        return FrequencySchedule.function(
            lambda t: self.value(t * scale),
            lambda t: self.derivative(t * scale) * scale,
            duration=tau,
        )


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    kind: str
    D0: float
    D1: float | None = None
    ramp_duration: float = 1.0
    times: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)
    func: Optional[Callable[[float], float]] = field(default=None, repr=False)
    dfunc: Optional[Callable[[float], float]] = field(default=None, repr=False)
    _interp: Optional[PchipInterpolator] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("constant", "linear_ramp", "tabulated", "function"):
            raise ValueError(f"unknown diffusion schedule kind {self.kind!r}")
        if not self.D0 >= 0:
            raise ValueError("D0 must be non-negative")
        if self.kind == "linear_ramp" and not (self.D1 is not None and self.D1 >= 0):
            raise ValueError("linear ramp needs a non-negative D1")
        if not self.ramp_duration > 0:
            raise ValueError("ramp_duration must be positive")
        if self.kind == "tabulated":
            t = np.asarray(self.times, dtype=float)
            d = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.size < 2 or t.shape != d.shape or np.any(np.diff(t) <= 0):
                raise ValueError("tabulated schedule needs increasing times and matching values")
            if np.any(d < 0):
                raise ValueError("tabulated diffusion constants must be non-negative")
            object.__setattr__(self, "times", t)
            object.__setattr__(self, "values", d)
            object.__setattr__(self, "_interp", PchipInterpolator(t, d, extrapolate=False))

    @classmethod
    def constant(cls, D):
        return cls("constant", D)

    @classmethod
    def linear_ramp(cls, D0, D1, tau):
        return cls("linear_ramp", D0, D1, tau)

    @classmethod
    def tabulated(cls, times, values):
        times = np.asarray(times, dtype=float)
        return cls("tabulated", float(values[0]), None, float(times[-1] - times[0]),
                   times=times, values=np.asarray(values, dtype=float))

    @classmethod
    def function(cls, func, dfunc=None, duration=1.0):
        return cls("function", float(func(0.0)), None, duration, func=func, dfunc=dfunc)

    @classmethod
    def isothermal(cls, osc: Oscillator, freq: FrequencySchedule, bath: Bath,
                   regime: Regime | str = Regime.QUANTUM,
                   units: UnitSystem = NATURAL) -> "DiffusionSchedule":
        """Bath at fixed ``T`` while the trap follows ``freq``."""
        regime = as_regime(regime)
        if regime is Regime.CLASSICAL:
            D = 2.0 * osc.m * osc.kappa * bath.kT(units)
            return cls("function", D, None, freq.ramp_duration,
                       func=lambda t: D, dfunc=lambda t: 0.0)
        half_bh = 0.5 * units.hbar * bath.beta(units)
        pref = osc.m * osc.kappa * units.hbar

        def D(t):
            w = freq.value(t)
            return pref * w / math.tanh(half_bh * w)

        def dD(t):
            w = freq.value(t)
            y = half_bh * w
            dDdw = pref * (1.0 / math.tanh(y) - (y / math.sinh(y) ** 2 if y < 350 else 0.0))
            return dDdw * freq.derivative(t)

        return cls("function", D(0.0), None, freq.ramp_duration, func=D, dfunc=dD)

    @property
    def breakpoints(self) -> tuple:
        if self.kind == "linear_ramp":
            return (self.ramp_duration,)
        if self.kind == "tabulated":
            return (float(self.times[-1]),)
        return ()

    def value(self, t: float) -> float:
        k = self.kind
        if k == "constant":
            return self.D0
        if k == "linear_ramp":
            s = min(max(t, 0.0), self.ramp_duration) / self.ramp_duration
            return self.D0 + (self.D1 - self.D0) * s
        if k == "tabulated":
            return float(self._interp(min(max(t, self.times[0]), self.times[-1])))
        return float(self.func(t))

    __call__ = value

    def derivative(self, t: float) -> float:
        k = self.kind
        if k == "constant":
            return 0.0
        if k == "linear_ramp":
            if not 0.0 <= t <= self.ramp_duration:
                return 0.0
            return (self.D1 - self.D0) / self.ramp_duration
        if k == "tabulated":
            if not self.times[0] <= t <= self.times[-1]:
                return 0.0
            return float(self._interp.derivative()(t))
        if self.dfunc is not None:
            return float(self.dfunc(t))
        return _central_difference(self.func, t, self.ramp_duration)

    def max_value(self, t_end: float) -> float:
        ts = np.linspace(0.0, t_end, 65)
        return max(self.value(float(x)) for x in ts)

    def rescaled(self, tau: float) -> "DiffusionSchedule":
        scale = self.ramp_duration / tau
        return DiffusionSchedule.function(
            lambda t: self.value(t * scale),
            lambda t: self.derivative(t * scale) * scale,
            duration=tau,
        )


# ------------------------------------------------------ fundamental matrix


@dataclass(frozen=True)
class FundamentalMatrix:
    t: float
    u: float
    v: float
    udot: float
    vdot: float
    m: float = 1.0
    numerical: bool = False

    def matrix(self) -> np.ndarray:
        return np.array([[self.u, self.v], [self.m * self.udot, self.m * self.vdot]])

    @property
    def wronskian(self) -> float:
        return self.m * (self.u * self.vdot - self.v * self.udot)

    @classmethod
    def from_matrix(cls, t, M, m, numerical=False) -> "FundamentalMatrix":
        return cls(t, float(M[0, 0]), float(M[0, 1]), float(M[1, 0]) / m, float(M[1, 1]) / m,
                   m, numerical)


def _damped_cs(kappa: float, omega: float, t: float) -> tuple[float, float]:
    """``exp(-kappa t) C(t)`` and ``exp(-kappa t) S(t)`` with ``S' = C``.

    ``C``/``S`` are cosh/sinh (overdamped) or cos/sin (underdamped) of the
    shifted frequency, continuous through critical damping.
    """
    s = kappa * kappa - omega * omega
    if s > 0:
        g = math.sqrt(s)
        lam_minus = omega * omega / (kappa + g)
        e = math.exp(-lam_minus * t)
        em = math.exp(-2.0 * g * t)
        return 0.5 * e * (1.0 + em), e * (-math.expm1(-2.0 * g * t)) / (2.0 * g)
    e = math.exp(-kappa * t)
    if s < 0:
        w = math.sqrt(-s)
        return e * math.cos(w * t), e * math.sin(w * t) / w
    return e, e * t


def _constant_matrix(osc: Oscillator, omega: float, t: float) -> np.ndarray:
    eC, eS = _damped_cs(osc.kappa, omega, t)
    m, k = osc.m, osc.kappa
    return np.array([[eC + k * eS, eS / m], [-m * omega * omega * eS, eC - k * eS]])


class FundamentalSolution:
    """Homogeneous propagator ``Phi(t, t0)`` mapping ``(q, p)(t0) -> (q, p)(t)``."""

    numerical = False

    def __init__(self, osc: Oscillator, freq: FrequencySchedule):
        self.osc = osc
        self.freq = freq

    def propagator(self, t: float, t0: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def propagator_family(self, t: float) -> Callable[[float], np.ndarray]:
        """``t0 -> Phi(t, t0)`` for fixed ``t``."""
        return lambda t0: self.propagator(t, t0)

    def matrix(self, t: float) -> FundamentalMatrix:
        return FundamentalMatrix.from_matrix(t, self.propagator(t, 0.0), self.osc.m, self.numerical)


class ConstantFrequencySolution(FundamentalSolution):
    def __init__(self, osc: Oscillator, omega: float):
        if not omega > 0:
            raise ValueError("omega must be positive")
        super().__init__(osc, FrequencySchedule.constant(omega))
        self.omega = omega

    def propagator(self, t, t0=0.0):
        return _constant_matrix(self.osc, self.omega, t - t0)


class _BasisSolution(FundamentalSolution):
    """Propagator from two independent solutions ``g+-`` of ``g'' + (omega^2 - kappa^2) g = 0``.

    With ``f = exp(-kappa t) g`` the damped solutions follow, and
    ``Phi(t, t0) = exp(-kappa (t - t0)) G(t) G(t0)^{-1}``.
    """

    def _g(self, t) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def _G(self, t):
        gp, gm, dgp, dgm = self._g(t)
        k, m = self.osc.kappa, self.osc.m
        return np.array([[gp, gm], [m * (dgp - k * gp), m * (dgm - k * gm)]])

    def propagator(self, t, t0=0.0):
        Gt = self._G(t)
        G0 = self._G(t0)
        det = G0[0, 0] * G0[1, 1] - G0[0, 1] * G0[1, 0]
        inv = np.array([[G0[1, 1], -G0[0, 1]], [-G0[1, 0], G0[0, 0]]]) / det
        return math.exp(-self.osc.kappa * (t - t0)) * (Gt @ inv)

    def _validate(self, t_end):
        """Raise ``BesselRangeError`` if the closed form is not trustworthy on ``[0, t_end]``."""
        ts = np.linspace(0.0, t_end, 9)
        G = [self._G(float(x)) for x in ts]
        for g in G:
            if not np.all(np.isfinite(g)):
                raise bessel.BesselRangeError("non-finite basis values")
        g0 = G[0]
        det = g0[0, 0] * g0[1, 1] - g0[0, 1] * g0[1, 0]
        scale = abs(g0[0, 0] * g0[1, 1]) + abs(g0[0, 1] * g0[1, 0])
        if not (scale > 0 and abs(det) > 1e-8 * scale):
            raise bessel.BesselRangeError("basis solutions nearly dependent at t=0")


class LinearRampSolution(_BasisSolution):
    """``omega^2 = omega0^2 (1 + r t/tau_r)``: ``g = sqrt(z) J_{+-1/3}(2/3 sqrt(b) z^{3/2})``, ``z = t + a``."""

    def __init__(self, osc: Oscillator, freq: FrequencySchedule):
        super().__init__(osc, freq)
        w0, r, tr, k = freq.omega0, freq.ramp_rate, freq.ramp_duration, osc.kappa
        if r <= 0:
            raise bessel.BesselRangeError("closed form needs an increasing ramp (r > 0)")
        self.a = (1.0 - k * k / (w0 * w0)) * tr / r
        self.b = w0 * w0 * r / tr
        if self.a <= 0:
            raise bessel.BesselRangeError("t + a <= 0 (kappa >= omega0): outside the Bessel form")
        self.c = (2.0 / 3.0) * math.sqrt(self.b)
        self._validate(tr)

    def _g(self, t):
        z = t + self.a
        sz = math.sqrt(z)
        X = self.c * z * sz
        out = []
        for nu in (1.0 / 3.0, -1.0 / 3.0):
            J = bessel.bessel_j_real_order(nu, X)
            dJ = bessel.bessel_j_derivative(nu, X)
            out.append((sz * J, 0.5 * J / sz + 1.5 * self.c * z * dJ))
        return out[0][0], out[1][0], out[0][1], out[1][1]


class ExponentialRampSolution(_BasisSolution):
    """``omega^2 = omega0^2 exp(r t/tau_r)``: ``g = J_{+-nu}(xi)``, ``xi = |2 tau_r omega0/r| e^{r t/2 tau_r}``.

    The order is ``nu = 2 tau_r kappa/|r|``; close to an integer the
    ``J_{-nu}`` partner is swapped for ``Y_nu``.
    """

    def __init__(self, osc: Oscillator, freq: FrequencySchedule):
        super().__init__(osc, freq)
        w0, r, tr, k = freq.omega0, freq.ramp_rate, freq.ramp_duration, osc.kappa
        if r == 0:
            raise bessel.BesselRangeError("zero ramp rate: use the constant solution")
        self.k = 0.5 * r / tr
        self.A = abs(w0 / self.k)
        self.nu = k / abs(self.k)
        if self.nu > bessel.MAX_ORDER:
            raise bessel.BesselRangeError(f"Bessel order {self.nu} outside validated range")
        self.use_y = abs(self.nu - round(self.nu)) < NEAR_INTEGER_ORDER
        self._validate(tr)

    def _g(self, t):
        xi = self.A * math.exp(self.k * t)
        nu = self.nu
        jp = bessel.bessel_j_real_order(nu, xi)
        djp = bessel.bessel_j_derivative(nu, xi)
        if self.use_y:
            jm = bessel.bessel_y(nu, xi)
            djm = bessel.bessel_y_derivative(nu, xi)
        else:
            jm = bessel.bessel_j_real_order(-nu, xi)
            djm = bessel.bessel_j_derivative(-nu, xi)
        dxi = self.k * xi
        return jp, jm, djp * dxi, djm * dxi


class NumericalSolution(FundamentalSolution):
    """Direct integration of the homogeneous system (any schedule)."""

    numerical = True

    def __init__(self, osc: Oscillator, freq: FrequencySchedule, rtol: float = 1e-12):
        super().__init__(osc, freq)
        self.rtol = rtol

    def _rhs_forward(self, t, y):
        m, k = self.osc.m, self.osc.kappa
        w2 = self.freq.omega2(t)
        # y = Phi flattened row-major; dPhi/dt = A(t) Phi
        a, b, c, d = y
        return [c / m, d / m, -m * w2 * a - 2 * k * c, -m * w2 * b - 2 * k * d]

    def _rhs_backward(self, t0, y):
        m, k = self.osc.m, self.osc.kappa
        w2 = self.freq.omega2(t0)
        # d Phi(t, t0)/d t0 = -Phi(t, t0) A(t0)
        a, b, c, d = y
        return [m * w2 * b, -a / m + 2 * k * b, m * w2 * d, -c / m + 2 * k * d]

    def _solve(self, rhs, t_start, t_stop, dense=False):
        sol = integrate.solve_ivp(rhs, (t_start, t_stop), [1.0, 0.0, 0.0, 1.0], method="DOP853",
                                  rtol=self.rtol, atol=1e-14, dense_output=dense)
        if not sol.success:
            raise StiffnessError(f"homogeneous integration failed: {sol.message}")
        return sol

    def propagator(self, t, t0=0.0):
        if t == t0:
            return np.eye(2)
        sol = self._solve(self._rhs_forward, t0, t)
        return sol.y[:, -1].reshape(2, 2)

    def propagator_family(self, t):
        if t == 0.0:
            return lambda t0: np.eye(2)
        sol = self._solve(self._rhs_backward, t, 0.0, dense=True)
        return lambda t0: sol.sol(t0).reshape(2, 2)


def fundamental_solution(osc: Oscillator, freq: FrequencySchedule, t_end: float | None = None,
                         prefer_closed_form: bool = True) -> FundamentalSolution:
    """Closed-form solution where one exists and is in range, else numerical."""
    if freq.kind == "constant":
        return ConstantFrequencySolution(osc, freq.omega0)
    if prefer_closed_form and (t_end is None or t_end <= freq.ramp_duration):
        cls = {"linear_ramp": LinearRampSolution,
               "exponential_ramp": ExponentialRampSolution}.get(freq.kind)
        if cls is not None:
            try:
                return cls(osc, freq)
            except bessel.BesselRangeError as exc:
                warnings.warn(f"closed form unavailable ({exc}); integrating numerically",
                              ClosedFormFallbackWarning, stacklevel=2)
    return NumericalSolution(osc, freq)


def fundamental_constant(osc: Oscillator, omega: float, t: float) -> FundamentalMatrix:
    if t < 0:
        raise ValueError("t must be non-negative")
    return ConstantFrequencySolution(osc, omega).matrix(t)


def _ramp_matrix(osc, sched, t, kind):
    if sched.kind != kind:
        raise ValueError(f"expected a {kind} schedule, got {sched.kind}")
    if not 0.0 <= t <= sched.ramp_duration:
        raise ValueError("t must lie within the ramp [0, tau_r]")
    return fundamental_solution(osc, sched).matrix(t)


def fundamental_linear_ramp(osc: Oscillator, sched: FrequencySchedule, t: float) -> FundamentalMatrix:
    return _ramp_matrix(osc, sched, t, "linear_ramp")


def fundamental_exponential_ramp(osc: Oscillator, sched: FrequencySchedule,
                                 t: float) -> FundamentalMatrix:
    return _ramp_matrix(osc, sched, t, "exponential_ramp")


# ------------------------------------------------------ variance propagation


def _scales(osc, omega_ref, D_ref):
    p2 = D_ref / (2.0 * osc.kappa)
    q2 = p2 / (osc.m * omega_ref) ** 2
    return q2, math.sqrt(q2 * p2), p2


def propagate_variance(solution: FundamentalSolution, V0: SecondMoments,
                       D_sched: DiffusionSchedule, t: float,
                       rtol: float = 1e-11) -> SecondMoments:
    """``V(t) = Phi V0 Phi^T + int_0^t Phi(t,t') diag(0, 2D(t')) Phi(t,t')^T dt'``.

    For constant frequency the time-translation form is used, with the
    integrand ``2 D(t - t') c c^T``, ``c = (v, m dv/dt)(t')``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    osc = solution.osc
    if t == 0:
        return V0
    Dref = D_sched.max_value(t)
    if Dref == 0.0:
        Phi_t = solution.propagator(t)
        return SecondMoments.from_matrix(Phi_t @ V0.as_matrix() @ Phi_t.T)
    sq, sqp, sp = _scales(osc, min(solution.freq.value(0.0), solution.freq.value(t)), Dref)
    norm = np.array([sq, sqp, sp])

    if isinstance(solution, ConstantFrequencySolution):
        Phi_t = solution.propagator(t)

        def column(tp):
            M = solution.propagator(tp)
            return M[0, 1], M[1, 1], D_sched.value(t - tp)

        points = [t - b for b in D_sched.breakpoints if 0 < t - b < t]
    else:
        family = solution.propagator_family(t)
        Phi_t = family(0.0)

        def column(tp):
            P = family(tp)
            return P[0, 1], P[1, 1], D_sched.value(tp)

        points = [b for b in D_sched.breakpoints + solution.freq.breakpoints if 0 < b < t]

    def integrand(tp):
        c0, c1, D = column(tp)
        return 2.0 * D * np.array([c0 * c0, c0 * c1, c1 * c1]) / norm

    res, err, info = integrate.quad_vec(integrand, 0.0, t, epsabs=1e-14, epsrel=rtol,
                                        norm="max", points=sorted(points) or None,
                                        limit=2000, full_output=True)
    if info.status != 0:
        raise QuadratureError(
            f"variance quadrature did not converge: status={info.status}, "
            f"intervals={info.intervals.shape[0]}, error estimate={err:.3g}")
    V = Phi_t @ V0.as_matrix() @ Phi_t.T
    return SecondMoments(V[0, 0] + res[0] * sq, 0.5 * (V[0, 1] + V[1, 0]) + res[1] * sqp,
                         V[1, 1] + res[2] * sp)


# ------------------------------------------------------------- moment ODE


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    t: np.ndarray
    X: np.ndarray  # shape (n, 3): q2, qp, p2
    freq: FrequencySchedule = field(repr=False)
    diffusion: DiffusionSchedule = field(repr=False)
    dense: Callable[[float], np.ndarray] = field(repr=False)

    def at(self, t: float) -> SecondMoments:
        return SecondMoments.from_array(self.dense(t))

    @property
    def final(self) -> SecondMoments:
        return SecondMoments.from_array(self.X[-1])

    def rows(self):
        for ti, x in zip(self.t, self.X):
            yield (ti, x[0], x[1], x[2], self.freq.value(ti), self.diffusion.value(ti))

    def to_csv(self, path):
        return write_csv(path, ["t", "q2", "qp", "p2", "omega", "D"], self.rows())


def moment_matrix(osc: Oscillator, omega: float) -> np.ndarray:
    m, k = osc.m, osc.kappa
    w2 = omega * omega
    return np.array([[0.0, 2.0 / m, 0.0],
                     [-m * w2, -2.0 * k, 1.0 / m],
                     [0.0, -2.0 * m * w2, -4.0 * k]])


def moment_ode_integrate(osc: Oscillator, freq: FrequencySchedule, D_sched: DiffusionSchedule,
                         V0: SecondMoments, t_span: tuple[float, float],
                         t_eval=None, rtol: float = ODE_RTOL, method: str = "DOP853",
                         max_step: float = np.inf) -> MomentTrajectory:
    """Integrate the closed equations for ``(<q^2>, <qp>, <p^2>)``."""
    m, k = osc.m, osc.kappa
    t0, t1 = map(float, t_span)

    def rhs(t, x):
        w2 = freq.omega2(t)
        q2, qp, p2 = x
        return [2.0 * qp / m,
                p2 / m - m * w2 * q2 - 2.0 * k * qp,
                -2.0 * m * w2 * qp - 4.0 * k * p2 + 2.0 * D_sched.value(t)]

    def jac(t, x):
        return moment_matrix(osc, freq.value(t))

    Dref = max(D_sched.value(t0), D_sched.value(t1), 1e-300)
    sq, sqp, sp = _scales(osc, min(freq.value(t0), freq.value(t1)), Dref)
    atol = 1e-3 * rtol * np.array([sq, sqp, sp])
    kwargs = dict(method=method, rtol=rtol, atol=atol, dense_output=True, max_step=max_step)
    if method in ("Radau", "BDF", "LSODA"):
        kwargs["jac"] = jac

    # integrate piecewise across schedule kinks so the error control sees them
    cuts = sorted({b for b in freq.breakpoints + D_sched.breakpoints if t0 < b < t1})
    edges = [t0, *cuts, t1]
    x = V0.as_array()
    pieces = []
    ts, xs = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        te = None
        if t_eval is not None:
            te = np.asarray([s for s in t_eval if a <= s <= b], dtype=float)
        sol = integrate.solve_ivp(rhs, (a, b), x, t_eval=te, **kwargs)
        if not sol.success:
            raise StiffnessError(
                f"moment integration failed at t={sol.t[-1]:.6g}: {sol.message}; "
                f"the moment system is stiff on the scale 1/(4 kappa) = {0.25 / k:.3g}; "
                f"try method='Radau' or max_step <= {0.25 / k:.3g}")
        pieces.append((a, b, sol.sol))
        x = sol.sol(b)
        if te is not None:
            ts.extend(sol.t)
            xs.extend(sol.y.T)
        else:
            ts.extend(sol.t if not ts else sol.t[1:])
            xs.extend(sol.y.T if not xs else sol.y.T[1:])

    def dense(t):
        for a, b, f in pieces:
            if t <= b:
                return f(t)
        return pieces[-1][2](t)

    if t_eval is not None:
        # drop duplicates at piece boundaries
        order = {}
        for ti, xi in zip(ts, xs):
            order.setdefault(float(ti), xi)
        ts, xs = list(order), list(order.values())
    return MomentTrajectory(np.asarray(ts), np.asarray(xs), freq, D_sched, dense)
