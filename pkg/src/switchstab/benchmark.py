"""Three-mode benchmark: one stable and two unstable planar subsystems.

The rates and comparison constants below are published values obtained with
an external estimation procedure; they are consumed as given. The quadratic
forms are a realization consistent with those constants (found offline with
a small feasibility search and rounded): ``P_2 = P_3 = I`` and ``P_1`` such
that ``A_1'P_1 + P_1 A_1 + 0.9389 P_1 < 0``, ``I <= 2.0611 P_1`` and
``P_1 <= 1.0651 I``. ``verify_certificate_sampled`` re-checks all of it.
"""
from __future__ import annotations

import numpy as np

from .certificates import CertificateSet, QuadraticCertificate
from .family import SwitchedFamily

A1 = np.array([[-0.3, 1.0], [-0.9, -1.2]])
A2 = np.array([[0.2, 0.1], [0.3, 0.0]])
A3 = np.array([[0.1, 0.2], [0.3, 0.1]])

LAMBDAS = {1: 0.9389, 2: -0.7301, 3: -0.7206}
MU = {
    (1, 2): 2.0611,
    (1, 3): 2.0611,
    (2, 1): 1.0651,
    (3, 1): 1.0651,
    (2, 3): 1.0,
    (3, 2): 1.0,
}
P1 = np.array([[0.742, 0.2053], [0.2053, 0.7496]])

# switching-signal parameters quoted alongside the example
N0 = 2.0
T0 = 0.3
RHO = 0.55
TAU_A = 6.93
ETA = {1: 0.45, 2: 0.25, 3: 0.30}

# stated value of the separated-limits left-hand side
STATED_LHS = 0.0843


def family() -> SwitchedFamily:
    return SwitchedFamily.from_matrices([A1, A2, A3], unstable=[2, 3])


def certificates() -> CertificateSet:
    """Per-mode rates and per-edge constants as published."""
    P = {1: P1, 2: np.eye(2), 3: np.eye(2)}
    return CertificateSet({i: QuadraticCertificate(i, P[i], LAMBDAS[i]) for i in (1, 2, 3)}, dict(MU))


def uniform_certificates() -> CertificateSet:
    """Uniformised constants: ``|lam_k| = lambda_u`` on unstable modes, every ``mu = max mu``.

    These are the constants under which the example's numbers are computed.
    Loosening a valid certificate this way keeps it valid.
    """
    lam_u = max(abs(LAMBDAS[k]) for k in (2, 3))
    mu = max(MU.values())
    base = certificates()
    certs = {
        1: base.certs[1],
        2: QuadraticCertificate(2, base.certs[2].P, -lam_u),
        3: QuadraticCertificate(3, base.certs[3].P, -lam_u),
    }
    return CertificateSet(certs, {e: mu for e in MU})
