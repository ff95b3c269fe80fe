"""Switching-signal synthesis for each signal class.

Point-wise classes are generated with token buckets: a bucket of capacity
``B`` refilled at rate ``r`` admits at most ``B + r (t - s)`` withdrawals on
any interval, which is exactly the shape of the average dwell-time
inequalities. Capacities are scaled by a safety factor so generated signals
sit strictly inside their class.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import benchmark
from .family import SwitchedFamily, TransitionGraph
from .signals import MIN_HOLD, SwitchingSignal

# extra slack on every token withdrawal so float rounding never crosses a bound
TOKEN_EPS = 1e-9

CLASSES = ("dwell", "adt", "mdadt", "mixed", "asymptotic", "example", "burst", "sqrt_growth", "random")


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    signal_class: str
    params: dict = field(default_factory=dict)
    horizon: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.signal_class not in CLASSES:
            raise GenerationError(f"unknown signal class {self.signal_class!r}")
        if self.signal_class != "burst" and not self.horizon > 0:
            raise GenerationError("horizon must be positive")

    def to_dict(self) -> dict:
        return {"class": self.signal_class, "params": self.params, "horizon": self.horizon, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        if "class" not in data:
            raise GenerationError("generator spec: missing field 'class'")
        return cls(data["class"], dict(data.get("params", {})), float(data.get("horizon", 100.0)), int(data.get("seed", 0)))


class _Walk:
    """Accumulates a signal while walking the transition graph."""

    def __init__(self, graph: TransitionGraph, start: int):
        self.graph = graph
        self.taus = [0.0]
        self.modes = [start]

    @property
    def mode(self) -> int:
        return self.modes[-1]

    @property
    def t(self) -> float:
        return self.taus[-1]

    @property
    def frozen(self) -> bool:
        """A one-vertex graph has no transitions: the signal stays constant."""
        return self.graph.n == 1

    def successors(self) -> list[int]:
        succ = self.graph.successors(self.mode)
        if not succ:
            raise GenerationError(f"cannot extend walk: vertex {self.mode} has no outgoing edge")
        return succ

    def switch(self, t: float, mode: int) -> None:
        if t - self.t < MIN_HOLD:
            t = self.t + 2 * MIN_HOLD
        self.taus.append(t)
        self.modes.append(mode)

    def signal(self, horizon: float) -> SwitchingSignal:
        return SwitchingSignal(self.taus, self.modes, horizon)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def _hold(rng, scale: float, fast_prob: float = 0.3) -> float:
    """Holding-time draw: occasional fast chatter, otherwise exponential around ``scale``."""
    if rng.random() < fast_prob:
        return float(rng.uniform(0.01, 0.2) * scale)
    return float(rng.exponential(scale))


def gen_random(family: SwitchedFamily, mean_hold: float, T: float, seed: int = 0, start: int | None = None) -> SwitchingSignal:
    """Unconstrained admissible walk with exponential holding times."""
    rng = _rng(seed)
    walk = _Walk(family.graph, start or int(rng.choice(family.ids)))
    if walk.frozen:
        return walk.signal(T)
    while True:
        t = walk.t + max(float(rng.exponential(mean_hold)), 10 * MIN_HOLD)
        if t >= T:
            return walk.signal(T)
        walk.switch(t, int(rng.choice(walk.successors())))


def gen_dwell(family: SwitchedFamily, tau_d: float, T: float, seed: int = 0, spread: float = 1.0) -> SwitchingSignal:
    if tau_d <= 0:
        raise GenerationError("tau_d must be positive")
    rng = _rng(seed)
    walk = _Walk(family.graph, int(rng.choice(family.ids)))
    if walk.frozen:
        return walk.signal(T)
    while True:
        t = walk.t + tau_d * (1 + spread * float(rng.random())) + TOKEN_EPS
        if t >= T:
            return walk.signal(T)
        walk.switch(t, int(rng.choice(walk.successors())))


def gen_adt(
    family: SwitchedFamily,
    N0: float,
    tau_a: float,
    safety: float = 0.95,
    T: float = 100.0,
    seed: int = 0,
) -> SwitchingSignal:
    """Walk whose switch count obeys ``N(s, t) <= safety * N0 + (t - s) / tau_a``."""
    if N0 <= 0 or tau_a <= 0:
        raise GenerationError("N0 and tau_a must be positive")
    if not 0 < safety <= 1:
        raise GenerationError("safety must lie in ]0, 1]")
    rng = _rng(seed)
    cap = safety * N0
    tokens = cap
    walk = _Walk(family.graph, int(rng.choice(family.ids)))
    if cap < 1 + TOKEN_EPS:
        return walk.signal(T)
    if walk.frozen:
        return walk.signal(T)
    while True:
        h = _hold(rng, tau_a)
        have = min(cap, tokens + h / tau_a)
        if have < 1 + TOKEN_EPS:
            h = (1 + 2 * TOKEN_EPS - tokens) * tau_a
            have = min(cap, tokens + h / tau_a)
        t = walk.t + h
        if t >= T:
            return walk.signal(T)
        succ = walk.successors()
        tokens = have - 1
        walk.switch(t, int(rng.choice(succ)))


def gen_mdadt(
    family: SwitchedFamily,
    N0: Mapping[int, float],
    tau_a: Mapping[int, float],
    T: float = 100.0,
    seed: int = 0,
    safety: float = 0.95,
) -> SwitchingSignal:
    """Walk obeying ``N_j(s, t) <= safety * N0_j + T_j(s, t) / tau_a_j`` for every mode.

    Mode ``j``'s bucket refills only while ``j`` is active, and each visit
    lasts until the bucket holds at least one token again, so every mode
    stays enterable.
    """
    if not 0 < safety <= 1:
        raise GenerationError("safety must lie in ]0, 1]")
    for j in family.ids:
        if j not in N0 or j not in tau_a or N0[j] <= 0 or tau_a[j] <= 0:
            raise GenerationError(f"mode {j}: N0 and tau_a must be given and positive")
    rng = _rng(seed)
    cap = {j: safety * N0[j] for j in family.ids}
    tokens = dict(cap)
    walk = _Walk(family.graph, int(rng.choice(family.ids)))
    if walk.frozen:
        return walk.signal(T)
    while True:
        j = walk.mode
        h = _hold(rng, tau_a[j])
        refill_to = min(cap[j], 1 + 2 * TOKEN_EPS)
        need = max(0.0, (refill_to - tokens[j]) * tau_a[j])
        h = max(h, need)
        t = walk.t + h
        if t >= T:
            return walk.signal(T)
        tokens[j] = min(cap[j], tokens[j] + h / tau_a[j])
        succ = [k for k in walk.successors() if tokens[k] >= 1 + TOKEN_EPS]
        if not succ:
            # nothing enterable: stay put for the rest of the horizon
            return walk.signal(T)
        k = int(rng.choice(succ))
        tokens[k] -= 1
        walk.switch(t, k)


def gen_mixed(
    family: SwitchedFamily,
    partition,
    N0: float,
    tau_a: float,
    T0: float,
    rho: float,
    T: float = 100.0,
    seed: int = 0,
    safety: float = 0.95,
) -> SwitchingSignal:
    """Walk obeying both the average dwell time and ``T^U(s, t) <= T0 + rho (t - s)``.

    Unstable time is metered by a fluid level of capacity ``safety * T0``
    that refills at rate ``rho`` and drains at rate 1 while an unstable mode
    is active. Unstable modes are entered only when the level covers the wait
    for the next switch token. With ``rho == 0`` unstable modes are never used.
    """
    if not 0 <= rho < 1:
        raise GenerationError(f"rho={rho} outside [0, 1)")
    if T0 < 0 or N0 <= 0 or tau_a <= 0:
        raise GenerationError("need T0 >= 0, N0 > 0 and tau_a > 0")
    if not 0 < safety <= 1:
        raise GenerationError("safety must lie in ]0, 1]")
    stable, unstable = partition
    if not stable:
        raise GenerationError("infeasible: no stable subsystem to start from")
    allow_unstable = rho > 0 and T0 > 0
    rng = _rng(seed)
    cap_a = safety * N0
    cap_u = safety * T0
    tokens, level = cap_a, cap_u
    walk = _Walk(family.graph, int(rng.choice(sorted(stable))))
    if cap_a < 1 + TOKEN_EPS:
        return walk.signal(T)

    if walk.frozen:
        return walk.signal(T)

    def token_wait(tok):
        return max(0.0, (1 + 2 * TOKEN_EPS - tok) * tau_a)

    # the clock may run past the last switch while a stable mode waits for an exit
    now = 0.0
    while True:
        j = walk.mode
        if j in unstable:
            h_max = (level - TOKEN_EPS) / (1 - rho)
            h_min = max(token_wait(tokens), 10 * MIN_HOLD)
            if h_min > h_max:
                raise GenerationError("infeasible: unstable budget exhausted before the next switch is allowed")
            h = float(rng.uniform(h_min, h_max))
        else:
            h = max(_hold(rng, tau_a), token_wait(tokens))
        now += h
        if now >= T:
            return walk.signal(T)
        tokens = min(cap_a, tokens + h / tau_a)
        if j in unstable:
            level -= (1 - rho) * h
        else:
            level = min(cap_u, level + rho * h)

        options = []
        for k in walk.successors():
            if k in unstable:
                if not allow_unstable:
                    continue
                need = max(token_wait(tokens - 1), 10 * MIN_HOLD)
                if (level - TOKEN_EPS) / (1 - rho) < need:
                    continue
            options.append(k)
        if not options:
            if j in unstable:
                raise GenerationError(f"infeasible: mode {j} has no admissible exit within the unstable budget")
            continue
        k = int(rng.choice(options))
        tokens -= 1
        walk.switch(now, k)


def stationary_distribution(graph: TransitionGraph) -> np.ndarray:
    """Visit frequencies of the uniform random walk on ``graph`` (vertices 1..n)."""
    if not graph.is_strongly_connected():
        raise GenerationError("graph is not strongly connected")
    n = graph.n
    if n == 1:
        return np.ones(1)
    P = np.zeros((n, n))
    for i in range(1, n + 1):
        succ = graph.successors(i)
        for j in succ:
            P[i - 1, j - 1] = 1 / len(succ)
    w, v = np.linalg.eig(P.T)
    k = int(np.argmin(np.abs(w - 1)))
    pi = np.abs(v[:, k].real)
    return pi / pi.sum()


def gen_asymptotic(
    family: SwitchedFamily,
    nu: float,
    eta: Mapping[int, float],
    T: float = 1000.0,
    seed: int = 0,
    jitter: float = 0.5,
) -> SwitchingSignal:
    """Random walk with long-run switching frequency ``nu`` and occupation fractions ``eta``.

    Mode ``j``'s mean holding time is ``eta_j / (nu pi_j)`` where ``pi`` is
    the walk's stationary visit distribution; holds are jittered uniformly by
    ``+-jitter`` relative.
    """
    if nu <= 0:
        raise GenerationError("nu must be positive")
    if not 0 <= jitter < 1:
        raise GenerationError("jitter must lie in [0, 1)")
    fr = np.array([float(eta.get(j, 0.0)) for j in family.ids])
    if np.any(fr <= 0) or abs(fr.sum() - 1) > 1e-9:
        raise GenerationError("eta must be positive for every mode and sum to 1")
    if family.n == 1:
        return SwitchingSignal.constant(family.ids[0], T)
    pi = stationary_distribution(family.graph)
    mean = fr / (nu * pi)
    rng = _rng(seed)
    walk = _Walk(family.graph, int(rng.choice(family.ids, p=pi)))
    while True:
        m = mean[walk.mode - 1]
        t = walk.t + m * float(rng.uniform(1 - jitter, 1 + jitter))
        if t >= T:
            return walk.signal(T)
        walk.switch(t, int(rng.choice(walk.successors())))


# fixed visiting order of the benchmark signal: every edge once per period
EXAMPLE_CYCLE = (1, 2, 3, 1, 3, 2)


def example_period() -> float:
    return len(EXAMPLE_CYCLE) * benchmark.TAU_A


def example_holds() -> dict[int, float]:
    """Per-visit holding times: each mode is visited twice per period."""
    return {j: benchmark.ETA[j] * example_period() / 2 for j in (1, 2, 3)}


def gen_example(T: float, seed: int = 0):
    """Periodic benchmark signal with the benchmark family and uniform certificates.

    ``seed`` is accepted for interface uniformity; the signal is fixed.
    """
    holds = example_holds()
    period = example_period()
    if T < period:
        raise GenerationError(f"horizon {T} shorter than one period {period}")
    n_seg = int(math.ceil(T / period * len(EXAMPLE_CYCLE))) + 1
    modes = np.array([EXAMPLE_CYCLE[k % len(EXAMPLE_CYCLE)] for k in range(n_seg)])
    lengths = np.array([holds[m] for m in modes])
    taus = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    keep = taus <= T
    sig = SwitchingSignal(taus[keep], modes[keep], T)
    return benchmark.family(), benchmark.uniform_certificates(), sig


def gen_sqrt_growth(family: SwitchedFamily, k0: float, k0p: float, T: float, seed: int = 0) -> SwitchingSignal:
    """Switch count following ``max(0, k0 t - k0p sqrt(t))``: the k-th switch sits where the target reaches k."""
    if k0 <= 0 or k0p < 0:
        raise GenerationError("need k0 > 0 and k0p >= 0")
    # number of switches up to T
    K = int(math.floor(k0 * T - k0p * math.sqrt(T) + 1e-9))
    rng = _rng(seed)
    start = int(rng.choice(family.ids))
    if K <= 0:
        return SwitchingSignal.constant(start, T)
    k = np.arange(1, K + 1, dtype=float)
    root = (k0p + np.sqrt(k0p**2 + 4 * k0 * k)) / (2 * k0)
    inst = root**2
    inst = inst[inst <= T]
    modes = [start]
    for _ in range(inst.size):
        succ = family.graph.successors(modes[-1])
        if not succ:
            raise GenerationError(f"cannot extend walk: vertex {modes[-1]} has no outgoing edge")
        modes.append(int(rng.choice(succ)))
    return SwitchingSignal(np.concatenate([[0.0], inst]), modes, T)


def burst_spacing(epsilon: float, n: int) -> float:
    """Spacing of the ``2^n`` switches after ``t = 2^n``.

    Uniform ``epsilon / 2^n``, floored so that holds stay above the Zeno guard
    after rounding to the float grid near ``2^(n+1)``.
    """
    floor = MIN_HOLD + 2 * float(np.spacing(2.0 ** (n + 1)))
    return max(epsilon / 2**n, floor)


def gen_burst(epsilon: float = 1e-3, n_max: int = 20) -> SwitchingSignal:
    """Two-mode signal: one switch at ``epsilon``, then ``2^n`` switches right after ``2^n``.

    Horizon ``2^(n_max + 1)``; the total switch count equals the horizon.
    """
    if not 0 < epsilon < 1:
        raise GenerationError("epsilon must lie in ]0, 1[")
    if not 0 <= n_max <= 24:
        raise GenerationError("n_max must lie in 0..24")
    parts = [np.array([0.0, epsilon])]
    for n in range(n_max + 1):
        base = 2.0**n
        s = burst_spacing(epsilon, n)
        if base * s >= base:
            raise GenerationError(f"burst {n} does not fit before t = {2 * base}")
        parts.append(base + s * np.arange(1, 2**n + 1))
    taus = np.concatenate(parts)
    modes = np.where(np.arange(taus.size) % 2 == 0, 1, 2)
    return SwitchingSignal(taus, modes, 2.0 ** (n_max + 1))


def generate(spec: GeneratorSpec, family: SwitchedFamily | None = None) -> SwitchingSignal:
    """Dispatch a ``GeneratorSpec``; the benchmark family is used when none is given."""
    fam = family or benchmark.family()
    p = spec.params
    T, seed = spec.horizon, spec.seed
    c = spec.signal_class
    try:
        if c == "dwell":
            return gen_dwell(fam, p["tau_d"], T, seed)
        if c == "adt":
            return gen_adt(fam, p["N0"], p["tau_a"], p.get("safety", 0.95), T, seed)
        if c == "mdadt":
            N0 = _per_mode(p["N0"], fam)
            tau = _per_mode(p["tau_a"], fam)
            return gen_mdadt(fam, N0, tau, T, seed, p.get("safety", 0.95))
        if c == "mixed":
            return gen_mixed(fam, fam.partition, p["N0"], p["tau_a"], p["T0"], p["rho"], T, seed, p.get("safety", 0.95))
        if c == "asymptotic":
            return gen_asymptotic(fam, p["nu"], _per_mode(p["eta"], fam), T, seed, p.get("jitter", 0.5))
        if c == "example":
            return gen_example(T, seed)[2]
        if c == "burst":
            return gen_burst(p.get("epsilon", 1e-3), int(p.get("n_max", 20)))
        if c == "sqrt_growth":
            return gen_sqrt_growth(fam, p["k0"], p["k0p"], T, seed)
        if c == "random":
            return gen_random(fam, p.get("mean_hold", 1.0), T, seed)
    except KeyError as exc:
        raise GenerationError(f"{c}: missing parameter {exc}") from None
    raise GenerationError(f"unknown signal class {c!r}")


def _per_mode(value, family: SwitchedFamily) -> dict[int, float]:
    if isinstance(value, Mapping):
        return {int(k): float(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        if len(value) != family.n:
            raise GenerationError(f"expected {family.n} per-mode values, got {len(value)}")
        return {j: float(v) for j, v in zip(family.ids, value)}
    return {j: float(value) for j in family.ids}
