import numpy as np
import pytest
from scipy.linalg import expm

from switchstab import benchmark, generators as gen
from switchstab.certificates import CertificateSet, QuadraticCertificate, build_certificates
from switchstab.family import SwitchedFamily
from switchstab.signals import SwitchingSignal
from switchstab.simulator import (
    DivergenceError,
    check_bound,
    check_sandwich,
    check_switch_jumps,
    decay_report,
    integrate,
    lyapunov_trace,
)
from helpers import random_family, random_signal


def test_single_mode_decay():
    fam = SwitchedFamily.from_matrices([-np.eye(2)])
    tr = integrate(fam, SwitchingSignal.constant(1, 1.0), [1, 0], 1e-3)
    assert np.linalg.norm(tr.x[-1]) == pytest.approx(np.exp(-1), abs=1e-6)
    assert tr.t[0] == 0 and tr.t[-1] == 1.0


def test_switch_back_and_forth():
    fam = SwitchedFamily.from_matrices([-np.eye(2), np.eye(2)], unstable=[2])
    tr = integrate(fam, SwitchingSignal([0, 1], [1, 2], 2.0), [1, 0], 1e-3)
    np.testing.assert_allclose(tr.x[-1], [1, 0], atol=1e-5)
    k = int(np.searchsorted(tr.t, 1.0))
    assert tr.t[k] == 1.0 and tr.modes[k] == 2 and tr.modes[k - 1] == 1


def test_rk4_matches_exact_flow():
    rng = np.random.default_rng(0)
    for _ in range(5):
        fam = random_family(rng, n_max=3, d_max=3, allow_unstable=False)
        mats = [fam.matrix(i) for i in fam.ids]
        scale = max(np.linalg.norm(A, 2) for A in mats)
        if scale > 5:
            fam = SwitchedFamily.from_matrices([A * 5 / scale for A in mats])
        sig = random_signal(rng, fam.n, 20.0)
        x0 = rng.standard_normal(fam.dimension)
        a = integrate(fam, sig, x0, 1e-3)
        b = integrate(fam, sig, x0, 1e-3, method="exact")
        np.testing.assert_array_equal(a.t, b.t)
        err = np.linalg.norm(a.x - b.x, axis=1) / np.maximum(np.linalg.norm(b.x, axis=1), 1e-300)
        assert err.max() <= 1e-6


def test_exact_flow_oracle():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    fam = SwitchedFamily.from_matrices([A])
    tr = integrate(fam, SwitchingSignal.constant(1, 3.0), [1, 1], 0.5, method="exact")
    np.testing.assert_allclose(tr.x[-1], expm(3 * A) @ [1, 1], rtol=1e-12)


def test_divergence():
    fam = SwitchedFamily.from_matrices([np.eye(1)], unstable=[1])
    with pytest.raises(DivergenceError) as info:
        integrate(fam, SwitchingSignal.constant(1, 100.0), [1.0], 0.1)
    part = info.value.trajectory
    assert 0 < part.t[-1] < 100 and np.linalg.norm(part.x[-1]) > 1e12


def test_zero_state():
    fam = benchmark.family()
    cs = benchmark.certificates()
    sig = gen.gen_random(fam, 1.0, 10.0, 0)
    tr = integrate(fam, sig, [0, 0])
    assert np.all(lyapunov_trace(tr, cs) == 0)
    assert check_bound(tr, sig, cs).passed


def test_bound_and_jumps_on_benchmark():
    fam = benchmark.family()
    cs = benchmark.certificates()
    sig = gen.gen_random(fam, 1.5, 60.0, 5)
    tr = integrate(fam, sig, [1.0, -0.5], 1e-2)
    rep = check_bound(tr, sig, cs)
    assert rep.passed, rep.worst_ratio
    assert check_switch_jumps(tr, sig, cs)
    assert check_sandwich(tr, cs)


def test_inflated_rate_fails_with_witness():
    fam = SwitchedFamily.from_matrices([np.array([[-1.0, 2.0], [0.0, -1.5]])])
    cs = build_certificates(fam)
    bad = CertificateSet({1: QuadraticCertificate(1, cs.certs[1].P, 2 * cs.lam(1))})
    sig = SwitchingSignal.constant(1, 5.0)
    tr = integrate(fam, sig, [1.0, 1.0], 1e-2)
    assert check_bound(tr, sig, cs).passed
    rep = check_bound(tr, sig, bad)
    assert not rep.passed and rep.witness_t > 0 and rep.max_excess > 0


def test_single_stable_mode_trace_nonincreasing():
    fam = SwitchedFamily.from_matrices([benchmark.A1])
    cs = build_certificates(fam)
    tr = integrate(fam, SwitchingSignal.constant(1, 10.0), [1.0, 2.0], 1e-3)
    V = lyapunov_trace(tr, cs)
    assert np.all(np.diff(V) <= 1e-7)


def test_decay_report():
    fam = SwitchedFamily.from_matrices([-np.eye(1), np.eye(1)], unstable=[2])
    stable = integrate(fam, SwitchingSignal.constant(1, 4.0), [1.0], 1e-2)
    assert decay_report(stable, 2.0).ratio < 1
    grow = integrate(fam, SwitchingSignal.constant(2, 4.0), [1.0], 1e-2)
    assert decay_report(grow, 2.0).ratio > 1
    with pytest.raises(ValueError):
        decay_report(stable, 4.0)


def test_mixed_signal_decays_on_benchmark():
    fam = benchmark.family()
    cs = benchmark.uniform_certificates()
    sig = gen.gen_mixed(fam, fam.partition, 3, 40, 5, 0.55, 4000.0, 1)
    tr = integrate(fam, sig, [1.0, 1.0], 0.05)
    assert check_bound(tr, sig, cs).passed
    assert decay_report(tr, 2000.0).ratio < 1
