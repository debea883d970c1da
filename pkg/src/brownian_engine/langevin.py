"""Euler-Maruyama ensembles of the Langevin oscillator with heat/work bookkeeping.

Per step of length ``dt`` (force and noise use midpoint parameters):

    q' = q + p dt/m
    p' = p + (-2 kappa p - a q') dt + sqrt(2 D dt) xi,     a = m omega^2

Energetics per trajectory, with ``U = p^2/2m + a q^2/2``:

    dW = -(q^2 + q'^2)/4 * da        work done by the system
    dU = U(q', p', a') - U(q, p, a)
    dQ = dU + dW                     heat absorbed

Trajectories are processed in fixed-size blocks, each drawing from its own
counter-based stream keyed by ``(seed, block index)``, so results do not
depend on how blocks are scheduled across workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Oscillator, SecondMoments
from .dynamics import DiffusionSchedule, FrequencySchedule
from .tables import write_csv

BLOCK_SIZE = 16384
MIN_TRAJECTORIES = 100


def _stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def _sqrt_cov(V: SecondMoments) -> np.ndarray:
    M = V.as_matrix()
    w, U = np.linalg.eigh(M)
    if w.min() < -1e-12 * max(abs(w.max()), 1e-300):
        raise ValueError("initial covariance is not positive semi-definite")
    return U @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def accumulate_thermo(q, p, q_new, p_new, a_old, a_new, m):
    """Per-step ``(dQ, dU, dW)`` for arrays of trajectories."""
    dW = -0.25 * (a_new - a_old) * (q * q + q_new * q_new)
    dU = (0.5 / m) * (p_new * p_new - p * p) + 0.5 * (a_new * q_new * q_new - a_old * q * q)
    return dU + dW, dU, dW


@dataclass
class _BlockResult:
    sums: np.ndarray      # (n_out, 3): sum of q^2, qp, p^2
    sqsums: np.ndarray    # (n_out, 3): sum of squares of the same
    Q: np.ndarray
    W: np.ndarray
    dU: np.ndarray
    Q_direct: np.ndarray
    balance: float


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    N: int
    dt: float
    seed: int
    t: np.ndarray
    moments: np.ndarray       # (n_out, 3) ensemble means of q^2, qp, p^2
    moments_se: np.ndarray    # (n_out, 3) standard errors
    Q: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    dU: np.ndarray = field(repr=False)
    Q_direct: np.ndarray = field(repr=False)
    balance_residual: float = 0.0

    @staticmethod
    def _mean_se(x):
        return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))

    @property
    def final_moments(self) -> SecondMoments:
        return SecondMoments.from_array(self.moments[-1])

    def summary(self) -> dict:
        out = {"N": self.N, "dt": self.dt, "seed": self.seed, "t_end": float(self.t[-1])}
        for name, v, s in zip(("q2", "qp", "p2"), self.moments[-1], self.moments_se[-1]):
            out[name] = float(v)
            out[name + "_se"] = float(s)
        for name in ("Q", "W", "dU", "Q_direct"):
            mean, se = self._mean_se(getattr(self, name))
            out[name] = mean
            out[name + "_se"] = se
        out["balance_residual"] = self.balance_residual
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _check_inputs(freq, osc, N, dt, t_end):
    if N < MIN_TRAJECTORIES:
        raise ValueError(f"need at least {MIN_TRAJECTORIES} trajectories")
    if not (dt > 0 and t_end > 0):
        raise ValueError("dt and t_end must be positive")
    ts = np.linspace(0.0, t_end, 257)
    w_max = max(freq.value(float(x)) for x in ts)
    limit = 0.01 / max(osc.kappa, w_max)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(f"dt = {dt:g} exceeds the stability bound 0.01/max(kappa, omega) = {limit:g}")


def simulate_ensemble(freq: FrequencySchedule, D_sched: DiffusionSchedule, osc: Oscillator,
                      V0: SecondMoments, N: int, dt: float, seed: int, t_end: float,
                      n_out: int = 2, workers: int = 1,
                      block_size: int = BLOCK_SIZE) -> EnsembleStats:
    """Simulate ``N`` trajectories on ``[0, t_end]`` and collect moments and energetics.

    Moments are recorded at ``n_out`` evenly spaced times including both ends.
    """
    _check_inputs(freq, osc, N, dt, t_end)
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * t_end:
        raise ValueError("t_end must be a whole number of steps")
    out_steps = np.unique(np.round(np.linspace(0, n_steps, max(n_out, 2))).astype(int))
    m, k = osc.m, osc.kappa
    tgrid = np.arange(n_steps + 1) * dt
    a = np.array([m * freq.omega2(float(t)) for t in tgrid])
    tmid = tgrid[:-1] + 0.5 * dt
    a_mid = np.array([m * freq.omega2(float(t)) for t in tmid])
    noise = np.sqrt(2.0 * dt * np.array([D_sched.value(float(t)) for t in tmid]))
    driven = bool(np.any(a[1:] != a[:-1]))
    L = _sqrt_cov(V0)

    def run_block(b):
        n = min(block_size, N - b * block_size)
        rng = _stream(seed, b)
        z = rng.standard_normal((2, n))
        q = L[0, 0] * z[0] + L[0, 1] * z[1]
        p = L[1, 0] * z[0] + L[1, 1] * z[1]
        W = np.zeros(n)
        Q = np.zeros(n)
        Qd = np.zeros(n)
        U0 = 0.5 * p * p / m + 0.5 * a[0] * q * q
        sums, sqsums = [], []
        j = 0

        def record():
            mom = np.stack([q * q, q * p, p * p])
            sums.append(mom.sum(axis=1))
            sqsums.append((mom * mom).sum(axis=1))

        if out_steps[0] == 0:
            record()
            j = 1
        for i in range(n_steps):
            xi = rng.standard_normal(n)
            q_new = q + p * (dt / m)
            p_new = p + (-2.0 * k * p - a_mid[i] * q_new) * dt + noise[i] * xi
            dQ, dU, dW = accumulate_thermo(q, p, q_new, p_new, a[i], a[i + 1], m)
            Q += dQ
            if driven:
                W += dW
            Qd += (p_new - p + a_mid[i] * q_new * dt) * (p + p_new) * (0.5 / m)
            q, p = q_new, p_new
            if j < out_steps.size and i + 1 == out_steps[j]:
                record()
                j += 1
        dU_tot = 0.5 * p * p / m + 0.5 * a[-1] * q * q - U0
        scale = max(float(np.max(np.abs(dU_tot))), float(np.max(np.abs(Q))), 1e-300)
        balance = float(np.max(np.abs(-Q + dU_tot + W))) / scale
        return _BlockResult(np.array(sums), np.array(sqsums), Q, W, dU_tot, Qd, balance)

    n_blocks = -(-N // block_size)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run_block, range(n_blocks)))
    else:
        results = [run_block(b) for b in range(n_blocks)]

    S = np.sum(np.stack([r.sums for r in results]), axis=0)
    S2 = np.sum(np.stack([r.sqsums for r in results]), axis=0)
    mean = S / N
    var = (S2 - N * mean * mean) / (N - 1)
    se = np.sqrt(np.clip(var, 0.0, None) / N)
    cat = lambda name: np.concatenate([getattr(r, name) for r in results])  # noqa: E731
    return EnsembleStats(N, dt, int(seed), out_steps * dt, mean, se, cat("Q"), cat("W"),
                         cat("dU"), cat("Q_direct"), max(r.balance for r in results))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    mean: float
    variance: float

    @property
    def integral(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))

    def to_csv(self, path):
        rows = zip(self.edges[:-1], self.edges[1:], self.density)
        return write_csv(path, ["bin_left", "bin_right", "density"], rows)


def work_distribution(values, bins: int = 50, value_range=None) -> Histogram:
    """Normalised histogram of per-trajectory values (work by default in the CLI)."""
    x = np.asarray(values, dtype=float)
    density, edges = np.histogram(x, bins=bins, range=value_range, density=True)
    return Histogram(edges, density, float(np.mean(x)), float(np.var(x, ddof=1)) if x.size > 1 else 0.0)
