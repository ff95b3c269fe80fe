"""Piecewise-constant switching signals and their counting/occupation statistics.

Intervals are half-open ``]s, t]``: a switch at instant ``tau`` is counted on
``]s, t]`` iff ``s < tau <= t``. Mode ``modes[k]`` is active on
``[taus[k], taus[k+1])`` and the last mode on ``[taus[-1], horizon]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np

# shortest holding time accepted at construction; excludes Zeno artefacts
MIN_HOLD = 1e-9


class InvalidSignalError(ValueError):
    pass


class InadmissibleTransitionError(ValueError):
    def __init__(self, edge, instant):
        super().__init__(f"inadmissible transition {edge} at t={instant!r}")
        self.edge = edge
        self.instant = instant


class TailRatio(NamedTuple):
    ratio: float
    last_mode: int
    last_mode_unstable: bool


@dataclass(frozen=True)
class SignalStats:
    t: float
    N: int
    N_kl: dict
    T_j: dict
    nu: float
    rho_kl: dict | None  # None: undefined because N(0, t) == 0
    eta_j: dict


class SwitchingSignal:
    def __init__(self, taus: Iterable[float], modes: Iterable[int], horizon: float, min_hold: float = MIN_HOLD):
        taus = np.array(taus, dtype=float).ravel()
        raw_modes = np.asarray(list(modes) if not isinstance(modes, np.ndarray) else modes).ravel()
        if taus.size == 0:
            raise InvalidSignalError("taus must contain at least tau_0 = 0")
        if raw_modes.size != taus.size:
            raise InvalidSignalError(f"{raw_modes.size} modes for {taus.size} switching instants")
        if raw_modes.dtype.kind == "f":
            if not np.all(raw_modes == np.round(raw_modes)):
                raise InvalidSignalError("modes must be integers")
        elif raw_modes.dtype.kind not in "iu":
            raise InvalidSignalError("modes must be integers")
        modes = raw_modes.astype(np.int64)
        horizon = float(horizon)
        if taus[0] != 0.0:
            raise InvalidSignalError("tau_0 must be 0")
        if not np.all(np.isfinite(taus)) or not np.isfinite(horizon):
            raise InvalidSignalError("switching instants and horizon must be finite")
        if np.any(modes < 1):
            raise InvalidSignalError("mode ids are 1-based")
        gaps = np.diff(taus)
        if np.any(gaps <= 0):
            k = int(np.argmax(gaps <= 0)) + 1
            raise InvalidSignalError(f"switching instants not strictly increasing at index {k}")
        if np.any(gaps < min_hold):
            k = int(np.argmax(gaps < min_hold))
            raise InvalidSignalError(
                f"holding time {gaps[k]!r} at index {k} below the Zeno guard {min_hold!r}"
            )
        if np.any(modes[1:] == modes[:-1]):
            k = int(np.argmax(modes[1:] == modes[:-1])) + 1
            raise InvalidSignalError(f"mode repeats across the switch at index {k}")
        if horizon < taus[-1]:
            raise InvalidSignalError("horizon precedes the last switching instant")
        taus.setflags(write=False)
        modes.setflags(write=False)
        self.taus = taus
        self.modes = modes
        self.horizon = horizon

    @classmethod
    def constant(cls, mode: int, horizon: float) -> "SwitchingSignal":
        return cls([0.0], [mode], horizon)

    def __repr__(self):
        return f"SwitchingSignal(n_switches={self.n_switches}, horizon={self.horizon!r})"

    def __eq__(self, other):
        if not isinstance(other, SwitchingSignal):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.taus, other.taus)
            and np.array_equal(self.modes, other.modes)
        )

    @property
    def n_switches(self) -> int:
        return self.taus.size - 1

    @property
    def switch_times(self) -> np.ndarray:
        return self.taus[1:]

    @cached_property
    def mode_ids(self) -> list[int]:
        return sorted(set(int(m) for m in self.modes))

    def holding_times(self) -> np.ndarray:
        """``S_i = tau_{i+1} - tau_i``; the last entry is truncated at the horizon."""
        return np.diff(np.append(self.taus, self.horizon))

    def transitions(self) -> np.ndarray:
        return np.column_stack([self.modes[:-1], self.modes[1:]])

    def check_admissible(self, graph, until: float | None = None) -> None:
        edges = graph.edges
        pairs = self.transitions()
        for k, (i, j) in enumerate(pairs, start=1):
            if until is not None and self.taus[k] > until:
                break
            if (int(i), int(j)) not in edges:
                raise InadmissibleTransitionError((int(i), int(j)), float(self.taus[k]))

    # counting

    def segment_index(self, t):
        """Index of the segment active at ``t``; equals ``N(0, t)``."""
        return np.searchsorted(self.taus[1:], t, side="right")

    def mode_at(self, t):
        return self.modes[self.segment_index(t)]

    def count(self, s: float, t: float) -> int:
        """Number of switches on ``]s, t]``."""
        if s > t:
            raise ValueError(f"empty interval: s={s} > t={t}")
        return int(self.segment_index(t) - self.segment_index(s))

    def count_into(self, j: int, s, t):
        """Number of switches into mode ``j`` on ``]s, t]``."""
        inst = self._entry_instants.get(int(j))
        if inst is None:
            return np.zeros(np.shape(t), dtype=np.int64) if np.ndim(t) else 0
        return np.searchsorted(inst, t, side="right") - np.searchsorted(inst, s, side="right")

    def entry_times(self, j: int) -> np.ndarray:
        """Switching instants at which mode ``j`` is entered."""
        return self._entry_instants.get(int(j), np.empty(0))

    @cached_property
    def _entry_instants(self) -> dict:
        sw = self.taus[1:]
        to = self.modes[1:]
        return {j: sw[to == j] for j in self.mode_ids}

    @cached_property
    def _edge_instants(self) -> dict:
        sw = self.taus[1:]
        if sw.size == 0:
            return {}
        pairs = self.transitions()
        codes = pairs[:, 0] * (int(self.modes.max()) + 1) + pairs[:, 1]
        out = {}
        for code in np.unique(codes):
            mask = codes == code
            i, j = pairs[mask][0]
            out[(int(i), int(j))] = sw[mask]
        return out

    def transition_count(self, edge, t):
        """``N_kl(0, t)``: switches along ``edge`` on ``]0, t]``."""
        inst = self._edge_instants.get((int(edge[0]), int(edge[1])))
        if inst is None:
            return np.zeros(np.shape(t), dtype=np.int64) if np.ndim(t) else 0
        return np.searchsorted(inst, t, side="right")

    # occupation

    @cached_property
    def _cum_occupation(self) -> dict:
        holds = np.diff(self.taus)
        out = {}
        for j in self.mode_ids:
            c = np.zeros(self.taus.size)
            np.cumsum(np.where(self.modes[:-1] == j, holds, 0.0), out=c[1:])
            out[j] = c
        return out

    def occupation(self, j: int, t):
        """``T_j(0, t)``, vectorised over ``t``."""
        _check_mode_id(j)
        cum = self._cum_occupation.get(int(j))
        t = np.asarray(t, dtype=float)
        if cum is None:
            return np.zeros_like(t) if t.ndim else 0.0
        k = self.segment_index(t)
        active = self.modes[k] == j
        val = cum[k] + np.where(active, t - self.taus[k], 0.0)
        return val if t.ndim else float(val)

    def activation_time(self, j: int, s: float, t: float) -> float:
        """Length of ``]s, t]`` during which mode ``j`` is active."""
        if s > t:
            raise ValueError(f"empty interval: s={s} > t={t}")
        return float(self.occupation(j, t) - self.occupation(j, s))

    def stable_unstable_durations(self, partition, s: float, t: float) -> tuple[float, float]:
        stable, unstable = partition
        ts = sum(self.activation_time(j, s, t) for j in stable)
        tu = sum(self.activation_time(k, s, t) for k in unstable)
        return float(ts), float(tu)

    def unstable_occupation(self, unstable, t):
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t)
        for k in unstable:
            total = total + self.occupation(k, t)
        return total if t.ndim else float(total)

    # densities

    def stats_at(self, t: float, graph) -> SignalStats:
        if not 0 < t <= self.horizon:
            raise ValueError(f"t={t} outside ]0, horizon]")
        self.check_admissible(graph, until=t)
        N = int(self.segment_index(t))
        N_kl = {e: int(self.transition_count(e, t)) for e in graph.sorted_edges()}
        T_j = {j: float(self.occupation(j, t)) for j in range(1, graph.n + 1)}
        rho = {e: c / N for e, c in N_kl.items()} if N > 0 else None
        return SignalStats(
            t=float(t),
            N=N,
            N_kl=N_kl,
            T_j=T_j,
            nu=N / t,
            rho_kl=rho,
            eta_j={j: v / t for j, v in T_j.items()},
        )

    def tail_ratio(self, t: float, unstable: Iterable[int] = ()) -> TailRatio:
        """``(t - tau_{N(0,t)}) / t`` and whether the last active mode is unstable."""
        if t <= 0:
            raise ValueError("t must be positive")
        k = int(self.segment_index(t))
        last = int(self.modes[k])
        ratio = (t - self.taus[k]) / t
        return TailRatio(float(ratio), last, last in set(unstable))

    # serialisation

    def to_dict(self) -> dict:
        return {
            "taus": [float(x) for x in self.taus],
            "modes": [int(m) for m in self.modes],
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SwitchingSignal":
        for key in ("taus", "modes", "horizon"):
            if key not in data:
                raise InvalidSignalError(f"signal: missing field {key!r}")
        return cls(data["taus"], data["modes"], data["horizon"])


def _check_mode_id(j) -> None:
    if int(j) != j or j < 1:
        raise ValueError(f"unknown mode id {j!r}")
