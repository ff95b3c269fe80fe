"""Trajectory integration under a switching signal and Lyapunov-bound checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .certificates import CertificateSet
from .criteria import psi
from .family import SwitchedFamily
from .signals import SwitchingSignal

DIVERGENCE_NORM = 1e12
BOUND_TOL = 1e-5


class DivergenceError(RuntimeError):
    def __init__(self, t: float, trajectory: "Trajectory"):
        super().__init__(f"state norm exceeded {DIVERGENCE_NORM:g} at t={t!r}")
        self.t = t
        self.trajectory = trajectory


@dataclass
class Trajectory:
    """Samples ``(t, x)`` with the active mode; switching instants appear once, with the new mode."""

    t: np.ndarray
    x: np.ndarray
    modes: np.ndarray

    def __len__(self):
        return self.t.size


def _rk4_step(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(
    family: SwitchedFamily,
    signal: SwitchingSignal,
    x0,
    step: float = 1e-2,
    method: str = "rk4",
) -> Trajectory:
    """Integrate ``dx/dt = f_sigma(x)`` on ``[0, horizon]``.

    Each segment is split into equal steps no longer than ``step`` so that the
    integrator lands exactly on every switching instant. ``method="exact"``
    uses the matrix exponential and needs a linear family.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if method not in ("rk4", "exact"):
        raise ValueError(f"unknown method {method!r}")
    if method == "exact" and not family.is_linear:
        raise ValueError("exact flow needs a linear family")
    x = np.asarray(x0, dtype=float).ravel()
    if x.size != family.dimension:
        raise ValueError(f"x0 has size {x.size}, expected {family.dimension}")
    ts, xs, ms = [0.0], [x.copy()], [int(signal.modes[0])]
    ends = np.append(signal.taus[1:], signal.horizon)
    for k, (start, end) in enumerate(zip(signal.taus, ends)):
        mode = int(signal.modes[k])
        sub = family.subsystem(mode)
        length = end - start
        if length <= 0:
            continue
        n = max(1, int(math.ceil(length / step - 1e-12)))
        h = length / n
        if method == "exact":
            Phi = expm(sub.matrix * h)
            advance = lambda v: Phi @ v
        else:
            advance = lambda v: _rk4_step(sub, v, h)
        for i in range(1, n + 1):
            x = advance(x)
            t = end if i == n else start + i * h
            ts.append(t)
            xs.append(x.copy())
            # the sample at a switching instant carries the mode that starts there
            ms.append(int(signal.modes[k + 1]) if (i == n and k + 1 < signal.modes.size) else mode)
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
                raise DivergenceError(t, Trajectory(np.array(ts), np.array(xs), np.array(ms)))
    return Trajectory(np.array(ts), np.array(xs), np.array(ms))


def lyapunov_trace(traj: Trajectory, cert_set: CertificateSet) -> np.ndarray:
    """``V_{sigma(t)}(x(t))`` along the trajectory."""
    out = np.empty(traj.t.size)
    for j in np.unique(traj.modes):
        mask = traj.modes == j
        out[mask] = cert_set.certs[int(j)].V(traj.x[mask])
    return out


@dataclass
class BoundReport:
    """``max_excess`` is the largest ``V - exp(psi) V(0)``; ``worst_ratio`` the largest ``V / (exp(psi) V(0))``."""

    passed: bool
    max_excess: float
    worst_ratio: float
    witness_t: float
    tolerance: float
    V: np.ndarray
    bound: np.ndarray
    psi: np.ndarray


def check_bound(
    traj: Trajectory,
    signal: SwitchingSignal,
    cert_set: CertificateSet,
    tol: float = BOUND_TOL,
) -> BoundReport:
    """Check ``V(t) <= V(0) exp(psi(t))`` with relative tolerance ``tol``."""
    V = lyapunov_trace(traj, cert_set)
    p = psi(signal, cert_set, traj.t)
    bound = V[0] * np.exp(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, V / bound, np.where(V > 0, np.inf, 1.0))
    i = int(np.argmax(ratio))
    excess = float(np.max(V - bound))
    return BoundReport(bool(ratio[i] <= 1 + tol), excess, float(ratio[i]), float(traj.t[i]), tol, V, bound, p)


def check_switch_jumps(traj: Trajectory, signal: SwitchingSignal, cert_set: CertificateSet, tol: float = 1e-9) -> bool:
    """At each switch ``V_new(x) <= mu V_old(x)``."""
    for k in range(1, signal.taus.size):
        i = int(np.searchsorted(traj.t, signal.taus[k]))
        if i >= traj.t.size or traj.t[i] != signal.taus[k]:
            raise ValueError(f"trajectory has no sample at switch {k}")
        old, new = int(signal.modes[k - 1]), int(signal.modes[k])
        x = traj.x[i]
        v_old = cert_set.certs[old].V(x)
        v_new = cert_set.certs[new].V(x)
        if v_new > cert_set.mu[(old, new)] * v_old * (1 + tol) + tol:
            return False
    return True


def sandwich_constants(cert_set: CertificateSet) -> tuple[float, float]:
    """``(a, b)`` with ``a |x|^2 <= V_i(x) <= b |x|^2`` for every certificate."""
    eig = [np.linalg.eigvalsh(c.P) for c in cert_set.certs.values()]
    return float(min(e[0] for e in eig)), float(max(e[-1] for e in eig))


def check_sandwich(traj: Trajectory, cert_set: CertificateSet, tol: float = 1e-9) -> bool:
    a, b = sandwich_constants(cert_set)
    V = lyapunov_trace(traj, cert_set)
    n2 = np.einsum("ij,ij->i", traj.x, traj.x)
    return bool(np.all(a * n2 <= V * (1 + tol) + tol) and np.all(V <= b * n2 * (1 + tol) + tol))


@dataclass
class DecayReport:
    sup_before: float
    sup_after: float
    ratio: float

    @property
    def decaying(self) -> bool:
        return self.ratio < 1


def decay_report(traj: Trajectory, t_split: float) -> DecayReport:
    """Largest state norm on ``[0, t_split]`` against the largest one after ``t_split``."""
    if not 0 < t_split < traj.t[-1]:
        raise ValueError("t_split must lie strictly inside the trajectory")
    norms = np.linalg.norm(traj.x, axis=1)
    before = float(norms[traj.t <= t_split].max())
    after = float(norms[traj.t > t_split].max())
    if before == 0:
        return DecayReport(before, after, 0.0 if after == 0 else math.inf)
    return DecayReport(before, after, after / before)


def trajectory_rows(traj: Trajectory, report: BoundReport):
    """Rows of ``t, mode, x_1..x_d, V, psi, bound``."""
    for i in range(traj.t.size):
        yield [traj.t[i], int(traj.modes[i]), *traj.x[i], report.V[i], report.psi[i], report.bound[i]]
