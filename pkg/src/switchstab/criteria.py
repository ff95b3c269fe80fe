"""Stability criteria for switching signals.

Point-wise criteria (dwell time, average dwell time, mode-dependent average
dwell time, unstable-activation budget) quantify over every interval
``]s, t]``. Each is checked exactly: the quantity being bounded is piecewise
linear in ``s`` and ``t`` with breakpoints at switching instants, so its
supremum is reached (as a one-sided limit) on a finite candidate set.

Asymptotic criteria are estimated on a tail window ``[(1 - w) T, T]`` of the
finite horizon ``T``; the reports say so.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .certificates import CertificateSet, UniformConstants, uniform_constants
from .signals import SwitchingSignal

DEFAULT_WINDOW = 0.5
DEFAULT_SAMPLES = 256


@dataclass
class CriterionReport:
    criterion: str
    satisfied: bool
    margin: float
    witness: dict | None = None
    parameters: dict = field(default_factory=dict)
    estimator: dict | None = None
    strict: bool = False
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class ClassVerificationError(ValueError):
    def __init__(self, report: CriterionReport, message: str | None = None):
        super().__init__(message or f"signal fails {report.criterion} (margin {report.margin:.6g})")
        self.report = report


# point-wise classes


def check_dwell_time(signal: SwitchingSignal, tau_d: float) -> CriterionReport:
    """Every complete holding time must be at least ``tau_d``.

    The final segment is truncated by the horizon and is not checked.
    """
    if tau_d <= 0:
        raise ValueError("tau_d must be positive")
    holds = signal.holding_times()[:-1]
    params = {"tau_d": tau_d}
    if holds.size == 0:
        return CriterionReport("dwell", True, math.inf, None, params)
    k = int(np.argmin(holds))
    margin = float(holds[k] - tau_d)
    witness = {"s": float(signal.taus[k]), "t": float(signal.taus[k + 1])}
    return CriterionReport("dwell", margin >= 0, margin, witness, params)


def _max_pair_gain(values: np.ndarray) -> tuple[int, int]:
    """Indices ``i <= j`` maximising ``values[j] - values[i]``."""
    runmin = np.minimum.accumulate(values)
    # index of the (first) element attaining each running minimum
    is_new_min = np.concatenate([[True], values[1:] < runmin[:-1]])
    runmin_idx = np.maximum.accumulate(np.where(is_new_min, np.arange(values.size), 0))
    j = int(np.argmax(values - runmin))
    return int(runmin_idx[j]), j


def adt_sup(signal: SwitchingSignal, tau_a: float) -> tuple[float, tuple[float, float] | None]:
    """``sup N(s, t) - (t - s) / tau_a`` over all intervals, with its interval.

    The supremum is approached with ``t`` at a switching instant and ``s``
    tending to another switching instant from below, so the returned pair
    ``(s, t)`` is read as ``]s^-, t]``: both endpoints' switches are counted.
    """
    sw = signal.switch_times
    if sw.size == 0:
        return 0.0, None
    v = np.arange(1, sw.size + 1) - sw / tau_a
    i, j = _max_pair_gain(v)
    return float((j - i + 1) - (sw[j] - sw[i]) / tau_a), (float(sw[i]), float(sw[j]))


def check_adt(signal: SwitchingSignal, N0: float, tau_a: float) -> CriterionReport:
    if N0 <= 0 or tau_a <= 0:
        raise ValueError("N0 and tau_a must be positive")
    sup, pair = adt_sup(signal, tau_a)
    margin = N0 - sup
    witness = None if pair is None else {"s": pair[0], "t": pair[1], "s_limit": "left"}
    return CriterionReport("adt", margin >= 0, float(margin), witness, {"N0": N0, "tau_a": tau_a})


def adt_threshold(mu: float, lambda_s: float) -> float:
    """Lower bound ``ln(mu) / lambda_s`` on stabilising average dwell times.

    Valid for families without unstable subsystems.
    """
    if lambda_s <= 0:
        raise ValueError("lambda_s must be positive")
    if mu < 1:
        raise ValueError("mu must be >= 1")
    return math.log(mu) / lambda_s


@dataclass
class ReserveTrace:
    times: np.ndarray
    reserves: np.ndarray
    infimum: float
    dwell_regime_reached: bool


def chatter_reserve_trace(signal: SwitchingSignal, N0: float, tau_a: float) -> ReserveTrace:
    """Remaining chatter reserve ``N0 + t / tau_a - N(0, t)`` just after each switch."""
    if not check_adt(signal, N0, tau_a).satisfied:
        raise ValueError("ADT not satisfied")
    sw = signal.switch_times
    reserves = N0 + sw / tau_a - np.arange(1, sw.size + 1)
    inf = float(min(N0, reserves.min())) if sw.size else float(N0)
    return ReserveTrace(sw.copy(), reserves, inf, inf < 1)


def mdadt_sup(signal: SwitchingSignal, j: int, tau_a: float) -> tuple[float, tuple[float, float] | None]:
    """``sup N_j(s, t) - T_j(s, t) / tau_a`` for one mode.

    ``N_j(s, t)`` counts switches into ``j`` on ``]s, t]``, so the initial
    activation is not counted. The supremum is approached with ``t`` at an
    entry into ``j`` and ``s`` tending to an earlier (or the same) entry from
    below.
    """
    entries = signal.entry_times(j)
    if entries.size == 0:
        return 0.0, None
    occ = signal.occupation(j, entries)
    v = np.arange(1, entries.size + 1) - occ / tau_a
    a, b = _max_pair_gain(v)
    sup = (b - a + 1) - (occ[b] - occ[a]) / tau_a
    return float(sup), (float(entries[a]), float(entries[b]))


def check_mdadt(signal: SwitchingSignal, N0: Mapping[int, float], tau_a: Mapping[int, float]) -> CriterionReport:
    per_mode = {}
    worst, worst_mode, witness = math.inf, None, None
    for j in signal.mode_ids:
        if j not in N0 or j not in tau_a:
            raise ValueError(f"missing mode-dependent parameters for mode {j}")
    for j in sorted(set(N0) | set(tau_a)):
        if N0[j] <= 0 or tau_a[j] <= 0:
            raise ValueError(f"mode {j}: N0 and tau_a must be positive")
        sup, pair = mdadt_sup(signal, j, tau_a[j])
        m = N0[j] - sup
        per_mode[j] = m
        if m < worst:
            worst, worst_mode = m, j
            witness = None if pair is None else {"s": pair[0], "t": pair[1], "s_limit": "left", "mode": j}
    return CriterionReport(
        "mdadt",
        worst >= 0,
        float(worst),
        witness,
        {"N0": dict(N0), "tau_a": dict(tau_a)},
        details={"per_mode_margin": per_mode, "worst_mode": worst_mode},
    )


def incoming_mu(cert_set: CertificateSet) -> dict[int, float]:
    """Edge-independent ``mu_j``: the largest constant on any edge into ``j``."""
    out = {j: 1.0 for j in cert_set.certs}
    for (_, j), v in cert_set.mu.items():
        out[j] = max(out.get(j, 1.0), v)
    return out


def mdadt_thresholds(cert_set: CertificateSet) -> dict[int, float]:
    lam = cert_set.lambdas()
    if any(v <= 0 for v in lam.values()):
        raise ValueError("mode-dependent thresholds require all subsystems stable")
    mu_j = incoming_mu(cert_set)
    return {j: math.log(mu_j[j]) / lam[j] for j in sorted(lam)}


def _unstable_runs(signal: SwitchingSignal, unstable) -> tuple[np.ndarray, np.ndarray]:
    starts = signal.taus
    ends = np.append(signal.taus[1:], signal.horizon)
    flag = np.isin(signal.modes, list(unstable)) & (ends > starts)
    if not flag.any():
        return np.empty(0), np.empty(0)
    prev = np.concatenate([[False], flag[:-1]])
    nxt = np.concatenate([flag[1:], [False]])
    return starts[flag & ~prev], ends[flag & ~nxt]


def budget_sup(signal: SwitchingSignal, unstable, rho: float) -> tuple[float, tuple[float, float] | None]:
    """``sup T^U(s, t) - rho (t - s)``; attained at unstable run boundaries."""
    run_s, run_e = _unstable_runs(signal, unstable)
    if run_s.size == 0:
        return 0.0, None
    # s ranges over run starts, t over run ends, s <= t
    g_s = signal.unstable_occupation(unstable, run_s) - rho * run_s
    g_e = signal.unstable_occupation(unstable, run_e) - rho * run_e
    runmin = np.minimum.accumulate(g_s)
    is_new_min = np.concatenate([[True], g_s[1:] < runmin[:-1]])
    runmin_idx = np.maximum.accumulate(np.where(is_new_min, np.arange(g_s.size), 0))
    # run b's own start precedes its end, so pairing a <= b keeps s <= t
    b = int(np.argmax(g_e - runmin))
    a = int(runmin_idx[b])
    s, t = float(run_s[a]), float(run_e[b])
    tu = signal.unstable_occupation(unstable, t) - signal.unstable_occupation(unstable, s)
    return max(0.0, float(tu - rho * (t - s))), (s, t)


def check_unstable_budget(signal: SwitchingSignal, partition, T0: float, rho: float) -> CriterionReport:
    if not 0 <= rho < 1:
        raise ValueError(f"rho={rho} outside [0, 1)")
    if T0 < 0:
        raise ValueError("T0 must be non-negative")
    _, unstable = partition
    sup, pair = budget_sup(signal, unstable, rho)
    margin = T0 - sup
    witness = None if pair is None else {"s": pair[0], "t": pair[1]}
    return CriterionReport("unstable_budget", margin >= 0, float(margin), witness, {"T0": T0, "rho": rho})


def mixed_adt_threshold(mu: float, lambda_s: float, lambda_u: float, rho: float) -> float:
    """``ln(mu) / (lambda_s (1 - rho) - lambda_u rho)`` for families with unstable modes."""
    if lambda_s <= 0 or lambda_u < 0:
        raise ValueError("need lambda_s > 0 and lambda_u >= 0")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    denom = lambda_s * (1 - rho) - lambda_u * rho
    if rho >= lambda_s / (lambda_s + lambda_u) or denom <= 0:
        raise ValueError("denominator non-positive")
    return math.log(mu) / denom


# cumulative exponent and its density


def _lookup_tables(cert_set: CertificateSet, size: int):
    lam = np.full(size, np.nan)
    for i, c in cert_set.certs.items():
        if i < size:
            lam[i] = c.lam
    lnmu = np.full((size, size), np.nan)
    for (i, j), v in cert_set.mu.items():
        if i < size and j < size:
            lnmu[i, j] = math.log(v)
    return lam, lnmu


def psi(signal: SwitchingSignal, cert_set: CertificateSet, t):
    """Cumulative log-bound exponent, vectorised over ``t``.

    ``psi(t) = sum ln mu over switches in ]0, t] - sum lam * (time in segment)``
    with the segment containing ``t`` truncated at ``t``.
    """
    size = int(signal.modes.max()) + 1
    lam, lnmu = _lookup_tables(cert_set, size)
    m = signal.modes
    lam_seg = lam[m]
    if np.isnan(lam_seg).any():
        missing = int(m[np.isnan(lam_seg)][0])
        raise KeyError(f"no certificate for mode {missing}")
    jump = lnmu[m[:-1], m[1:]]
    if np.isnan(jump).any():
        k = int(np.argmax(np.isnan(jump)))
        raise KeyError(f"missing mu for realized edge ({int(m[k])}, {int(m[k + 1])})")
    cum_jump = np.concatenate([[0.0], np.cumsum(jump)])
    cum_flow = np.concatenate([[0.0], np.cumsum(lam_seg[:-1] * np.diff(signal.taus))])
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > signal.horizon):
        raise ValueError("t outside [0, horizon]")
    k = signal.segment_index(t_arr)
    out = cum_jump[k] - cum_flow[k] - lam_seg[k] * (t_arr - signal.taus[k])
    return out if t_arr.ndim else float(out)


def _weights(cert_set: CertificateSet, partition) -> dict[int, float]:
    """Signed occupation weights: ``-|lam|`` for stable, ``+|lam|`` for unstable modes."""
    stable, unstable = partition
    w = {j: -abs(cert_set.lam(j)) for j in stable}
    w.update({k: abs(cert_set.lam(k)) for k in unstable})
    return w


def density_samples(signal: SwitchingSignal, graph, ts) -> dict:
    """Vectorised ``nu``, ``rho_kl`` (NaN where undefined) and ``eta_j`` at times ``ts``."""
    ts = np.asarray(ts, dtype=float)
    if np.any(ts <= 0):
        raise ValueError("densities need t > 0")
    signal.check_admissible(graph, until=float(ts.max()))
    N = signal.segment_index(ts)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = {
            e: np.where(N > 0, signal.transition_count(e, ts) / np.maximum(N, 1), np.nan)
            for e in graph.sorted_edges()
        }
    eta = {j: signal.occupation(j, ts) / ts for j in range(1, graph.n + 1)}
    return {"t": ts, "N": N, "nu": N / ts, "rho": rho, "eta": eta}


def composite_density(signal: SwitchingSignal, cert_set: CertificateSet, partition, graph, t):
    """``nu sum(ln mu_kl rho_kl) - sum_S |lam| eta + sum_U |lam| eta``, vectorised.

    Where ``N(0, t) = 0`` the transition term is 0 (``nu`` vanishes there).
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    d = density_samples(signal, graph, t_arr)
    jump = np.zeros_like(t_arr)
    for e, r in d["rho"].items():
        if e in cert_set.mu:
            jump += math.log(cert_set.mu[e]) * np.nan_to_num(r, nan=0.0)
        elif np.any(np.nan_to_num(r) > 0):
            raise KeyError(f"missing mu for realized edge {e}")
    val = d["nu"] * jump
    for j, w in _weights(cert_set, partition).items():
        val = val + w * d["eta"].get(j, 0.0)
    return val if np.ndim(t) else float(val[0])


def tail_times(horizon: float, window: float = DEFAULT_WINDOW, samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    if not 0 < window <= 1:
        raise ValueError("window must lie in ]0, 1]")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    start = (1 - window) * horizon
    if start <= 0:
        return horizon * np.arange(1, samples + 1) / samples
    return np.linspace(start, horizon, samples)


@dataclass
class LimitEstimates:
    """Finite-horizon min/max of each statistic over a common tail sample set.

    These stand in for liminf/limsup; they are estimates, not limits.
    """

    window: float
    samples: int
    times: np.ndarray
    nu: tuple[float, float]
    rho: dict  # edge -> (lo, hi), or None when undefined on every sample
    eta: dict
    tail_ratio: tuple[float, float]
    psi_density_sup: float | None = None
    psi_density_argmax: float | None = None


def _lohi(x: np.ndarray):
    x = x[~np.isnan(x)]
    if x.size == 0:
        return None
    return float(x.min()), float(x.max())


def estimate_limits(
    signal: SwitchingSignal,
    graph,
    partition,
    window: float = DEFAULT_WINDOW,
    samples: int = DEFAULT_SAMPLES,
    cert_set: CertificateSet | None = None,
) -> LimitEstimates:
    ts = tail_times(signal.horizon, window, samples)
    d = density_samples(signal, graph, ts)
    k = signal.segment_index(ts)
    tail = (ts - signal.taus[k]) / ts
    est = LimitEstimates(
        window=window,
        samples=samples,
        times=ts,
        nu=(float(d["nu"].min()), float(d["nu"].max())),
        rho={e: _lohi(r) for e, r in d["rho"].items()},
        eta={j: (float(v.min()), float(v.max())) for j, v in d["eta"].items()},
        tail_ratio=(float(tail.min()), float(tail.max())),
    )
    if cert_set is not None:
        dens = composite_density(signal, cert_set, partition, graph, ts)
        i = int(np.argmax(dens))
        est.psi_density_sup = float(dens[i])
        est.psi_density_argmax = float(ts[i])
    return est


def _estimator(window, samples) -> dict:
    return {"window": window, "samples": samples, "kind": "finite-horizon tail estimate"}


def check_unified(
    signal: SwitchingSignal,
    cert_set: CertificateSet,
    partition,
    graph,
    window: float = DEFAULT_WINDOW,
    samples: int = DEFAULT_SAMPLES,
) -> CriterionReport:
    """Tail estimate of ``limsup Psi(t) < 0``; margin is ``-max Psi`` over the window."""
    ts = tail_times(signal.horizon, window, samples)
    dens = composite_density(signal, cert_set, partition, graph, ts)
    i = int(np.argmax(dens))
    sup = float(dens[i])
    return CriterionReport(
        "unified",
        sup < 0,
        -sup,
        {"t": float(ts[i])},
        {},
        _estimator(window, samples),
        strict=True,
        details={"psi_density_sup": sup},
    )


def asymptotic_lhs(est: LimitEstimates, cert_set: CertificateSet, partition, uniform_mu: bool = False) -> float:
    """Separated-limits left-hand side built from ``LimitEstimates``.

    ``uniform_mu`` replaces every ``mu_kl`` by the largest one.
    """
    stable, unstable = partition
    mu_max = max(cert_set.mu.values(), default=1.0)
    jump = 0.0
    for e, lohi in est.rho.items():
        if lohi is None:
            continue
        mu = mu_max if uniform_mu else cert_set.mu[e]
        jump += math.log(mu) * lohi[1]
    lhs = est.nu[1] * jump
    lhs -= sum(abs(cert_set.lam(j)) * est.eta[j][0] for j in stable)
    lhs += sum(abs(cert_set.lam(k)) * est.eta[k][1] for k in unstable)
    return float(lhs)


def check_asymptotic(
    signal: SwitchingSignal,
    cert_set: CertificateSet,
    partition,
    graph,
    window: float = DEFAULT_WINDOW,
    samples: int = DEFAULT_SAMPLES,
) -> CriterionReport:
    est = estimate_limits(signal, graph, partition, window, samples, cert_set)
    lhs = asymptotic_lhs(est, cert_set, partition)
    lhs_uniform = asymptotic_lhs(est, cert_set, partition, uniform_mu=True)
    return CriterionReport(
        "asymptotic",
        lhs < 0,
        -lhs,
        {"t": est.psi_density_argmax},
        {},
        _estimator(window, samples),
        strict=True,
        details={
            "lhs": lhs,
            "lhs_uniform_mu": lhs_uniform,
            "nu_limsup": est.nu[1],
            "psi_density_sup": est.psi_density_sup,
        },
    )


# implication harness


@dataclass
class ImplicationReport:
    signal_class: str
    class_reports: list
    threshold: float | dict | None
    unified: CriterionReport

    @property
    def implication_holds(self) -> bool:
        return self.unified.satisfied


def implication_report(
    signal: SwitchingSignal,
    signal_class: str,
    params: Mapping,
    cert_set: CertificateSet,
    partition,
    graph,
    window: float = DEFAULT_WINDOW,
    samples: int = DEFAULT_SAMPLES,
) -> ImplicationReport:
    """Verify ``signal`` in a point-wise or asymptotic class, then evaluate the unified estimate.

    Raises ``ClassVerificationError`` if the signal is not in the class with
    parameters beyond the stabilising threshold. The result is a numerical
    witness, not a proof.
    """
    stable, unstable = partition
    reports = []
    threshold = None
    if signal_class in ("dwell", "adt"):
        if unstable:
            raise ValueError(f"{signal_class} thresholds assume no unstable subsystems")
        uc = uniform_constants(cert_set, partition)
        threshold = adt_threshold(uc.mu, uc.lambda_s)
        if signal_class == "dwell":
            rep = check_dwell_time(signal, params["tau_d"])
            tau = params["tau_d"]
        else:
            rep = check_adt(signal, params["N0"], params["tau_a"])
            tau = params["tau_a"]
        reports.append(rep)
        _require(rep)
        if not tau > threshold:
            raise ClassVerificationError(rep, f"{signal_class}: {tau} does not exceed threshold {threshold:.6g}")
    elif signal_class == "mdadt":
        threshold = mdadt_thresholds(cert_set)
        rep = check_mdadt(signal, params["N0"], params["tau_a"])
        reports.append(rep)
        _require(rep)
        for j, thr in threshold.items():
            if j in params["tau_a"] and not params["tau_a"][j] > thr:
                raise ClassVerificationError(rep, f"mdadt: mode {j} tau_a does not exceed {thr:.6g}")
    elif signal_class == "mixed":
        uc = uniform_constants(cert_set, partition)
        threshold = mixed_adt_threshold(uc.mu, uc.lambda_s, uc.lambda_u, params["rho"])
        for rep in (
            check_adt(signal, params["N0"], params["tau_a"]),
            check_unstable_budget(signal, partition, params["T0"], params["rho"]),
        ):
            reports.append(rep)
            _require(rep)
        if not params["tau_a"] > threshold:
            raise ClassVerificationError(reports[0], f"mixed: tau_a does not exceed {threshold:.6g}")
    elif signal_class == "asymptotic":
        rep = check_asymptotic(signal, cert_set, partition, graph, window, samples)
        reports.append(rep)
        _require(rep)
    else:
        raise ValueError(f"unknown signal class {signal_class!r}")
    unified = check_unified(signal, cert_set, partition, graph, window, samples)
    return ImplicationReport(signal_class, reports, threshold, unified)


def _require(rep: CriterionReport) -> None:
    if not rep.satisfied:
        raise ClassVerificationError(rep)


__all__ = [
    "CriterionReport",
    "ClassVerificationError",
    "LimitEstimates",
    "ReserveTrace",
    "ImplicationReport",
    "UniformConstants",
    "check_dwell_time",
    "check_adt",
    "adt_sup",
    "adt_threshold",
    "chatter_reserve_trace",
    "check_mdadt",
    "mdadt_sup",
    "mdadt_thresholds",
    "incoming_mu",
    "check_unstable_budget",
    "budget_sup",
    "mixed_adt_threshold",
    "estimate_limits",
    "psi",
    "composite_density",
    "density_samples",
    "tail_times",
    "check_unified",
    "asymptotic_lhs",
    "check_asymptotic",
    "implication_report",
]
