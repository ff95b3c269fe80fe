import numpy as np

from switchstab.family import SwitchedFamily
from switchstab.signals import SwitchingSignal


def random_hurwitz(rng, d, margin=0.1):
    A = rng.standard_normal((d, d))
    shift = np.max(np.linalg.eigvals(A).real) + margin + rng.uniform(0, 1)
    return A - shift * np.eye(d)


def random_unstable(rng, d):
    A = rng.standard_normal((d, d))
    shift = np.max(np.linalg.eigvals(A).real) - rng.uniform(0.05, 0.5)
    return A - shift * np.eye(d)


def random_family(rng, n_max=4, d_max=4, allow_unstable=True):
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    n_unstable = int(rng.integers(0, n)) if allow_unstable else 0
    mats = [random_hurwitz(rng, d) for _ in range(n - n_unstable)]
    mats += [random_unstable(rng, d) for _ in range(n_unstable)]
    return SwitchedFamily.from_matrices(mats, unstable=range(n - n_unstable + 1, n + 1))


def random_signal(rng, n_modes, horizon, mean_hold=1.0, graph=None):
    taus, modes = [0.0], [int(rng.integers(1, n_modes + 1))]
    if n_modes == 1:
        return SwitchingSignal(taus, modes, horizon)
    t = 0.0
    while True:
        t += max(rng.exponential(mean_hold), 1e-6)
        if t >= horizon:
            break
        if graph is None:
            choices = [m for m in range(1, n_modes + 1) if m != modes[-1]]
        else:
            choices = graph.successors(modes[-1])
        taus.append(t)
        modes.append(int(rng.choice(choices)))
    return SwitchingSignal(taus, modes, horizon)
