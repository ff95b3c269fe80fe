"""Quadratic Lyapunov-like certificates, decay rates and comparison constants."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import eigh, expm

from .family import HURWITZ_TOL, STABLE, SwitchedFamily, spectral_abscissa

SYM_TOL = 1e-12
PD_TOL = 1e-10


class NotHurwitzError(ValueError):
    pass


class RateWarning(UserWarning):
    pass


def _check_symmetric(m: np.ndarray, name: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    scale = max(np.linalg.norm(m), 1.0)
    if np.linalg.norm(m - m.T) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")


def _check_pd(m: np.ndarray, name: str) -> None:
    _check_symmetric(m, name)
    if np.linalg.eigvalsh(m).min() <= PD_TOL:
        raise ValueError(f"{name} is not positive definite")


@dataclass(frozen=True)
class QuadraticCertificate:
    """``V(x) = x' P x`` together with its rate ``lam``.

    ``lam > 0`` bounds decay for a stable mode, ``lam < 0`` bounds growth for
    an unstable one: ``V(x(t)) <= V(x(0)) exp(-lam t)``.
    """

    id: int
    P: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
        object.__setattr__(self, "lam", float(self.lam))

    def V(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.P, x)


@dataclass(frozen=True)
class CertificateSet:
    certs: Mapping[int, QuadraticCertificate]
    mu: Mapping[tuple, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "certs", dict(self.certs))
        object.__setattr__(self, "mu", {(int(i), int(j)): float(v) for (i, j), v in self.mu.items()})

    def lam(self, i: int) -> float:
        return self.certs[i].lam

    def lambdas(self) -> dict[int, float]:
        return {i: c.lam for i, c in self.certs.items()}

    def validate(self, family: SwitchedFamily | None = None) -> list[str]:
        out = []
        for i, c in sorted(self.certs.items()):
            P = c.P
            if P.ndim != 2 or P.shape[0] != P.shape[1]:
                out.append(f"certs[{i}].P: not square")
                continue
            scale = max(np.linalg.norm(P), 1.0)
            if np.linalg.norm(P - P.T) > SYM_TOL * scale:
                out.append(f"certs[{i}].P: not symmetric")
            elif np.linalg.eigvalsh(P).min() <= 0:
                out.append(f"certs[{i}].P: not positive definite")
        for e, v in sorted(self.mu.items()):
            if not v >= 1.0:
                out.append(f"mu[{e}]: value {v} < 1")
        if family is not None:
            for i in family.ids:
                if i not in self.certs:
                    out.append(f"certs: missing certificate for subsystem {i}")
                    continue
                lam = self.certs[i].lam
                if i in family.stable and not lam > 0:
                    out.append(f"certs[{i}].lambda: stable subsystem needs lambda > 0")
                if i in family.unstable and lam > 0:
                    out.append(f"certs[{i}].lambda: unstable subsystem needs lambda <= 0")
            for e in family.graph.sorted_edges():
                if e not in self.mu:
                    out.append(f"mu: missing entry for edge {e}")
        return out


@dataclass(frozen=True)
class UniformConstants:
    lambda_s: float
    lambda_u: float
    mu: float


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve ``A'P + PA + Q = 0`` through the vectorised (Kronecker) system."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if Q.shape != A.shape:
        raise ValueError(f"Q has shape {Q.shape}, expected {A.shape}")
    _check_pd(Q, "Q")
    if spectral_abscissa(A) >= -HURWITZ_TOL:
        raise NotHurwitzError("not Hurwitz")
    d = A.shape[0]
    eye = np.eye(d)
    # column-major vec: vec(A'P) = (I kron A') vec P, vec(PA) = (A' kron I) vec P
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    p = np.linalg.solve(K, -Q.reshape(-1, order="F"))
    P = p.reshape(d, d, order="F")
    return 0.5 * (P + P.T)


def lyapunov_residual(A, P, Q) -> float:
    A = np.asarray(A, dtype=float)
    return float(np.linalg.norm(A.T @ P + P @ A + Q))


def rate_stable(A, Q, P) -> float:
    A, Q, P = (np.asarray(m, dtype=float) for m in (A, Q, P))
    if not (A.shape == Q.shape == P.shape) or A.ndim != 2:
        raise ValueError("A, Q and P must be square matrices of equal size")
    return float(np.linalg.eigvalsh(Q).min() / np.linalg.eigvalsh(P).max())


def rate_unstable(A) -> float:
    """Matrix-measure rate for ``V = |x|^2``: returns ``-lambda_max(A + A')``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    lam = -float(np.linalg.eigvalsh(A + A.T).max())
    if abs(lam) < 1e-12:
        lam = 0.0
    if lam >= 0:
        warnings.warn("rate not strictly negative", RateWarning, stacklevel=2)
    return lam


def mu_pair(P_i, P_j) -> float:
    """Smallest ``mu >= 1`` with ``x'P_j x <= mu x'P_i x`` for all x."""
    P_i = np.asarray(P_i, dtype=float)
    P_j = np.asarray(P_j, dtype=float)
    if P_i.shape != P_j.shape:
        raise ValueError("P_i and P_j differ in size")
    _check_pd(P_i, "P_i")
    _check_pd(P_j, "P_j")
    top = float(eigh(P_j, P_i, eigvals_only=True)[-1])
    return max(1.0, top)


def build_certificates(family: SwitchedFamily, Q: Mapping[int, np.ndarray] | None = None) -> CertificateSet:
    if not family.is_linear:
        raise ValueError("automatic certificates need a linear family")
    Q = dict(Q or {})
    certs = {}
    for s in family.subsystems:
        A = s.matrix
        if s.id in family.stable:
            Qi = np.asarray(Q.get(s.id, np.eye(family.dimension)), dtype=float)
            try:
                P = solve_lyapunov(A, Qi)
            except NotHurwitzError as exc:
                raise NotHurwitzError(f"subsystem {s.id}: {exc}") from None
            certs[s.id] = QuadraticCertificate(s.id, P, rate_stable(A, Qi, P))
        else:
            certs[s.id] = QuadraticCertificate(s.id, np.eye(family.dimension), rate_unstable(A))
    mu = {(i, j): mu_pair(certs[i].P, certs[j].P) for i, j in family.graph.sorted_edges()}
    return CertificateSet(certs, mu)


def uniform_constants(cert_set: CertificateSet, partition) -> UniformConstants:
    stable, unstable = partition
    if not stable:
        raise ValueError("no stable subsystem")
    lambda_s = min(abs(cert_set.lam(j)) for j in stable)
    lambda_u = max((abs(cert_set.lam(k)) for k in unstable), default=0.0)
    mu = max(cert_set.mu.values(), default=1.0)
    return UniformConstants(lambda_s, lambda_u, mu)


@dataclass
class CertificateCheck:
    n_samples: int
    worst_mu_slack: float
    mu_witness: dict | None
    worst_decay_slack: float
    decay_witness: dict | None
    tolerance: float

    @property
    def mu_ok(self) -> bool:
        return self.worst_mu_slack >= -self.tolerance

    @property
    def decay_ok(self) -> bool:
        return self.worst_decay_slack >= -self.tolerance

    @property
    def passed(self) -> bool:
        return self.mu_ok and self.decay_ok


def verify_certificate_sampled(
    cert_set: CertificateSet,
    family: SwitchedFamily,
    n_samples: int = 10_000,
    horizon: float = 10.0,
    seed: int = 0,
    tolerance: float = 1e-9,
    n_flow_samples: int | None = None,
) -> CertificateCheck:
    """Sample-based check of the comparison inequality and the decay bound.

    Slacks are relative: ``(mu V_i - V_j) / V_i`` per edge and
    ``(exp(-lam t) V(x) - V(x(t))) / (exp(-lam t) V(x))`` per linear flow.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    d = family.dimension

    worst_mu, mu_wit = math.inf, None
    for (i, j), mu in sorted(cert_set.mu.items()):
        x = rng.standard_normal((n_samples, d))
        vi = cert_set.certs[i].V(x)
        vj = cert_set.certs[j].V(x)
        slack = (mu * vi - vj) / vi
        k = int(np.argmin(slack))
        if slack[k] < worst_mu:
            worst_mu = float(slack[k])
            mu_wit = {"edge": (i, j), "x": x[k].tolist(), "slack": worst_mu}

    worst_dec, dec_wit = math.inf, None
    n_flow = n_flow_samples or min(n_samples, 1000)
    for s in family.subsystems:
        if not s.is_linear:
            continue
        cert = cert_set.certs[s.id]
        A = s.matrix
        xs = rng.standard_normal((n_flow, d))
        ts = rng.uniform(0.0, horizon, n_flow)
        for x, t in zip(xs, ts):
            xt = expm(A * t) @ x
            bound = cert.V(x) * math.exp(-cert.lam * t)
            slack = (bound - cert.V(xt)) / bound
            if slack < worst_dec:
                worst_dec = float(slack)
                dec_wit = {"subsystem": s.id, "x": x.tolist(), "t": float(t), "slack": worst_dec}

    return CertificateCheck(
        n_samples, worst_mu, mu_wit, worst_dec, dec_wit, tolerance
    )
