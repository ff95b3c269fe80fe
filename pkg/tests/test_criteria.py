import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchstab import benchmark, criteria as cr
from switchstab.certificates import CertificateSet, QuadraticCertificate
from switchstab.family import TransitionGraph
from switchstab.signals import SwitchingSignal
from helpers import random_signal

G2 = TransitionGraph.complete(2)
PART_S = (frozenset({1, 2}), frozenset())


@pytest.fixture
def sig():
    return SwitchingSignal([0, 1, 3], [1, 2, 1], 4.0)


@pytest.fixture
def certs2():
    return CertificateSet(
        {1: QuadraticCertificate(1, np.eye(2), 2.0), 2: QuadraticCertificate(2, np.eye(2), -1.0)},
        {(1, 2): 2.0, (2, 1): 2.0},
    )


# point-wise classes, hand-computed cases


def test_dwell(sig):
    r = cr.check_dwell_time(sig, 1.0)
    assert r.satisfied and r.margin == 0
    r = cr.check_dwell_time(sig, 1.5)
    assert not r.satisfied and r.witness == {"s": 0.0, "t": 1.0}
    assert cr.check_dwell_time(SwitchingSignal.constant(1, 5), 100).satisfied


def test_adt(sig):
    r = cr.check_adt(sig, 1, 2)
    assert r.satisfied and r.margin == pytest.approx(0.0)
    r = cr.check_adt(sig, 1, 3)
    assert not r.satisfied
    assert r.margin == pytest.approx(1 - (2 - 2 / 3))
    assert (r.witness["s"], r.witness["t"]) == (1.0, 3.0)
    assert cr.check_adt(SwitchingSignal.constant(1, 5), 0.1, 0.1).satisfied


def test_adt_threshold():
    assert cr.adt_threshold(1.0, 0.5) == 0
    assert cr.adt_threshold(2.0611, 0.9389) == pytest.approx(0.770305, abs=1e-6)
    assert cr.adt_threshold(math.e, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cr.adt_threshold(2.0, 0.0)


def test_chatter_reserve(sig):
    tr = cr.chatter_reserve_trace(sig, 1, 2)
    np.testing.assert_allclose(tr.reserves, [0.5, 0.5])
    assert tr.infimum == pytest.approx(0.5)
    assert cr.chatter_reserve_trace(SwitchingSignal.constant(1, 3), 2, 1).infimum == 2
    burst = SwitchingSignal([0, 1e-3, 2e-3, 3e-3], [1, 2, 1, 2], 10)
    assert cr.chatter_reserve_trace(burst, 3, 1).infimum == pytest.approx(0.003)
    with pytest.raises(ValueError, match="ADT not satisfied"):
        cr.chatter_reserve_trace(sig, 1, 3)


def test_mdadt(sig):
    r = cr.check_mdadt(sig, {1: 1, 2: 1}, {1: 1.9, 2: 1.9})
    assert r.satisfied
    # the only entry into mode 1 is at t = 3, so one extra visit is always covered by N0 = 1
    assert cr.check_mdadt(sig, {1: 1, 2: 1}, {1: 2.5, 2: 1.9}).satisfied
    # re-entering mode 1 after a short stay elsewhere
    s2 = SwitchingSignal([0, 1, 3, 3.2, 5], [2, 1, 2, 1, 2], 6.0)
    r = cr.check_mdadt(s2, {1: 1, 2: 3}, {1: 2.5, 2: 10})
    assert not r.satisfied
    assert r.witness["mode"] == 1 and (r.witness["s"], r.witness["t"]) == (1.0, 3.2)
    assert r.margin == pytest.approx(1 - (2 - 2 / 2.5))
    single = SwitchingSignal.constant(1, 10)
    assert cr.check_mdadt(single, {1: 1}, {1: 0.01}).satisfied
    with pytest.raises(ValueError, match="missing"):
        cr.check_mdadt(sig, {1: 1}, {1: 1.0})


def test_mdadt_thresholds():
    cs = CertificateSet({1: QuadraticCertificate(1, np.eye(1), 0.5), 2: QuadraticCertificate(2, np.eye(1), 0.5)},
                        {(1, 2): 2.0, (2, 1): 1.0})
    th = cr.mdadt_thresholds(cs)
    assert th[2] == pytest.approx(math.log(2) / 0.5)
    assert th[1] == 0
    with pytest.raises(ValueError, match="require all subsystems stable"):
        cr.mdadt_thresholds(benchmark.certificates())


def test_unstable_budget(sig):
    part = (frozenset({1}), frozenset({2}))
    r = cr.check_unstable_budget(sig, part, 1.0, 0.5)
    assert r.satisfied and r.margin == pytest.approx(0.0)
    assert (r.witness["s"], r.witness["t"]) == (1.0, 3.0)
    r = cr.check_unstable_budget(sig, part, 0.5, 0.5)
    assert not r.satisfied
    r = cr.check_unstable_budget(sig, PART_S, 0.7, 0.2)
    assert r.satisfied and r.margin == 0.7
    with pytest.raises(ValueError):
        cr.check_unstable_budget(sig, part, 1.0, 1.0)


def test_mixed_threshold():
    assert cr.mixed_adt_threshold(2.0, 0.5, 0.0, 0.0) == pytest.approx(cr.adt_threshold(2.0, 0.5))
    assert cr.mixed_adt_threshold(2.0611, 0.9389, 0.7301, 0.55) == pytest.approx(34.522, abs=1e-3)
    with pytest.raises(ValueError, match="denominator non-positive"):
        cr.mixed_adt_threshold(2.0, 1.0, 1.0, 0.5)


# brute-force interval oracles


def adt_brute(s, tau):
    sw = list(s.switch_times)
    best = 0.0
    for i in range(len(sw)):
        for j in range(i, len(sw)):
            best = max(best, (j - i + 1) - (sw[j] - sw[i]) / tau)
    return best


def mdadt_brute(s, j, tau):
    ent = [t for t, m in zip(s.taus[1:], s.modes[1:]) if m == j]
    best = 0.0
    for a in range(len(ent)):
        for b in range(a, len(ent)):
            occ = s.activation_time(j, ent[a], ent[b])
            best = max(best, (b - a + 1) - occ / tau)
    return best


def budget_brute(s, unstable, rho):
    pts = list(s.taus) + [s.horizon]
    best = 0.0
    for a in pts:
        for b in pts:
            if b >= a:
                tu = sum(s.activation_time(k, a, b) for k in unstable)
                best = max(best, tu - rho * (b - a))
    return best


small_signals = st.builds(
    lambda seed, n: random_signal(np.random.default_rng(seed), n, 12.0, mean_hold=0.8),
    st.integers(0, 100_000),
    st.integers(2, 3),
)


@settings(max_examples=80, deadline=None)
@given(small_signals, st.floats(0.1, 5.0))
def test_adt_matches_brute_force(s, tau):
    assert cr.adt_sup(s, tau)[0] == pytest.approx(adt_brute(s, tau), abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(small_signals, st.floats(0.1, 5.0))
def test_mdadt_matches_brute_force(s, tau):
    for j in (1, 2, 3):
        assert cr.mdadt_sup(s, j, tau)[0] == pytest.approx(mdadt_brute(s, j, tau), abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(small_signals, st.floats(0.0, 0.95))
def test_budget_matches_brute_force(s, rho):
    assert cr.budget_sup(s, [2], rho)[0] == pytest.approx(budget_brute(s, [2], rho), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(small_signals, st.floats(0.2, 3.0), st.floats(1.0, 3.0))
def test_adt_monotone_in_parameters(s, tau, N0):
    if cr.check_adt(s, N0, tau).satisfied:
        assert cr.check_adt(s, N0 + 0.5, tau).satisfied
        assert cr.check_adt(s, N0, tau / 1.5).satisfied


# cumulative exponent


def test_psi_hand_expansion(sig, certs2):
    assert cr.psi(sig, certs2, 4.0) == pytest.approx(math.log(4) - 2, abs=1e-12)
    assert cr.psi(sig, certs2, 0.0) == 0.0
    graph_part = ((frozenset({1}), frozenset({2})), G2)
    Psi = cr.composite_density(sig, certs2, *graph_part, 4.0)
    assert Psi == pytest.approx(-0.15343, abs=1e-5)
    assert 4.0 * Psi == pytest.approx(cr.psi(sig, certs2, 4.0), abs=1e-12)


def test_psi_single_mode(certs2):
    s = SwitchingSignal.constant(1, 10)
    assert cr.psi(s, certs2, 3.0) == pytest.approx(-6.0)
    Psi = cr.composite_density(s, certs2, (frozenset({1}), frozenset({2})), G2, np.array([1.0, 5.0]))
    np.testing.assert_allclose(Psi, [-2.0, -2.0])


def test_psi_missing_mu():
    cs = CertificateSet({1: QuadraticCertificate(1, np.eye(1), 1.0), 2: QuadraticCertificate(2, np.eye(1), 1.0)},
                        {(1, 2): 2.0})
    s = SwitchingSignal([0, 1, 2], [1, 2, 1], 3)
    with pytest.raises(KeyError):
        cr.psi(s, cs, 3.0)


def psi_loop(s, cs, t):
    total = 0.0
    ends = list(s.taus[1:]) + [s.horizon]
    for k, (a, b) in enumerate(zip(s.taus, ends)):
        if a > t:
            break
        total -= cs.lam(int(s.modes[k])) * (min(b, t) - a)
        if k > 0:
            total += math.log(cs.mu[(int(s.modes[k - 1]), int(s.modes[k]))])
    return total


@settings(max_examples=60, deadline=None)
@given(small_signals, st.floats(0.01, 1.0), st.integers(0, 1000))
def test_psi_identity_and_loop_oracle(s, frac, seed):
    rng = np.random.default_rng(seed)
    cs = CertificateSet(
        {j: QuadraticCertificate(j, np.eye(1), float(rng.uniform(-1, 2)) or 0.5) for j in (1, 2, 3)},
        {(i, j): float(rng.uniform(1, 3)) for i in (1, 2, 3) for j in (1, 2, 3) if i != j},
    )
    part = (frozenset(j for j in (1, 2, 3) if cs.lam(j) > 0), frozenset(j for j in (1, 2, 3) if cs.lam(j) <= 0))
    t = frac * s.horizon
    p = cr.psi(s, cs, t)
    assert p == pytest.approx(psi_loop(s, cs, t), rel=1e-9, abs=1e-9)
    Psi = cr.composite_density(s, cs, part, TransitionGraph.complete(3), t)
    assert t * Psi == pytest.approx(p, rel=1e-9, abs=1e-9)


# asymptotic estimates


def test_tail_times():
    ts = cr.tail_times(100.0, 0.5, 5)
    np.testing.assert_allclose(ts, [50, 62.5, 75, 87.5, 100])
    assert cr.tail_times(10.0, 1.0, 4)[0] == pytest.approx(2.5)
    with pytest.raises(ValueError):
        cr.tail_times(10.0, 0.0, 4)


def test_single_mode_estimates(certs2):
    s = SwitchingSignal.constant(1, 50)
    est = cr.estimate_limits(s, G2, PART_S)
    assert est.nu == (0.0, 0.0)
    assert est.eta[1] == (1.0, 1.0)
    assert all(v is None for v in est.rho.values())
    rep = cr.check_unified(s, certs2, (frozenset({1}), frozenset({2})), G2)
    assert rep.satisfied and rep.margin == pytest.approx(2.0)
    assert rep.strict and rep.estimator["window"] == 0.5


def test_periodic_estimates():
    # two-mode period 3: mode 1 for 1, mode 2 for 2
    n = 400
    taus = np.concatenate([[0.0], np.cumsum(np.tile([1.0, 2.0], n))[:-1]])
    modes = np.tile([1, 2], n)
    s = SwitchingSignal(taus, modes, 3.0 * n)
    est = cr.estimate_limits(s, G2, PART_S)
    assert est.nu[0] == pytest.approx(2 / 3, abs=2 / s.horizon * 2)
    assert est.nu[1] == pytest.approx(2 / 3, abs=2 / s.horizon * 2)
    assert est.eta[1][0] == pytest.approx(1 / 3, abs=1e-2)


def test_unified_on_benchmark_signal():
    from switchstab.generators import example_period, gen_example

    fam, cs, s = gen_example(100 * example_period())
    rep = cr.check_unified(s, cs, fam.partition, fam.graph)
    assert not rep.satisfied
    assert rep.margin == pytest.approx(-0.083, abs=0.002)
    a = cr.check_asymptotic(s, cs, fam.partition, fam.graph)
    assert not a.satisfied and a.details["lhs"] == pytest.approx(0.0843, abs=0.002)


def test_implication_report_rejects_non_members(sig, certs2):
    cs = CertificateSet({1: QuadraticCertificate(1, np.eye(1), 1.0), 2: QuadraticCertificate(2, np.eye(1), 1.0)},
                        {(1, 2): 2.0, (2, 1): 2.0})
    with pytest.raises(cr.ClassVerificationError):
        cr.implication_report(sig, "adt", {"N0": 1, "tau_a": 3}, cs, PART_S, G2)
    with pytest.raises(cr.ClassVerificationError, match="threshold"):
        cr.implication_report(sig, "adt", {"N0": 2, "tau_a": 0.5}, cs, PART_S, G2)
    rep = cr.implication_report(SwitchingSignal.constant(1, 20), "dwell", {"tau_d": 1.0}, cs, PART_S, G2)
    assert rep.implication_holds


def test_budget_boundary_alternating_schedule():
    # equal holds h alternating stable/unstable: the worst window is one unstable hold,
    # so T0 = (1 - rho) h sits exactly on the boundary
    h, rho = 2.0, 0.5
    taus = np.arange(0, 40, h)
    modes = np.where(np.arange(taus.size) % 2 == 0, 1, 2)
    s = SwitchingSignal(taus, modes, 40.0)
    part = (frozenset({1}), frozenset({2}))
    r = cr.check_unstable_budget(s, part, (1 - rho) * h, rho)
    assert r.satisfied and r.margin == pytest.approx(0.0, abs=1e-12)
    assert not cr.check_unstable_budget(s, part, 0.0, rho).satisfied
