"""Families of subsystems, the stable/unstable partition and the transition graph."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Iterable

import numpy as np

STABLE = "stable"
UNSTABLE = "unstable"

# spectral abscissa below this counts as Hurwitz
HURWITZ_TOL = 1e-10


class UnknownSubsystemError(KeyError):
    pass


@dataclass(frozen=True)
class Subsystem:
    """One member of the family.

    ``dynamics`` is either a square matrix (``dx/dt = A x``) or a callable
    ``f(x) -> dx/dt``.
    """

    id: int
    dynamics: np.ndarray | Callable[[np.ndarray], np.ndarray]
    declared_class: str

    @property
    def is_linear(self) -> bool:
        return not callable(self.dynamics)

    @property
    def matrix(self) -> np.ndarray:
        if not self.is_linear:
            raise TypeError(f"subsystem {self.id} has no matrix (nonlinear)")
        return self.dynamics

    def __call__(self, x):
        if self.is_linear:
            return self.dynamics @ x
        return np.asarray(self.dynamics(x), dtype=float)


@dataclass(frozen=True)
class TransitionGraph:
    """Directed graph of admissible transitions on vertices 1..n."""

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset((int(i), int(j)) for i, j in self.edges))

    @classmethod
    def complete(cls, n: int) -> "TransitionGraph":
        return cls(n, frozenset(permutations(range(1, n + 1), 2)))

    def successors(self, i: int) -> list[int]:
        return sorted(j for (k, j) in self.edges if k == i)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def is_strongly_connected(self) -> bool:
        if self.n == 1:
            return True
        verts = range(1, self.n + 1)
        for reverse in (False, True):
            adj = {v: [] for v in verts}
            for i, j in self.edges:
                if reverse:
                    i, j = j, i
                if i in adj:
                    adj[i].append(j)
            seen, stack = {1}, [1]
            while stack:
                for w in adj[stack.pop()]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            if len(seen) != self.n:
                return False
        return True


@dataclass(frozen=True)
class SwitchedFamily:
    subsystems: tuple
    dimension: int
    graph: TransitionGraph
    stable: frozenset
    unstable: frozenset

    @classmethod
    def from_matrices(
        cls,
        matrices: Iterable,
        unstable: Iterable[int] = (),
        edges: Iterable | None = None,
    ) -> "SwitchedFamily":
        """Build a linear family; ids are 1-based in the order given.

        Modes not listed in ``unstable`` are declared stable. ``edges=None``
        means the complete graph.
        """
        mats = [np.atleast_2d(np.asarray(a, dtype=float)) for a in matrices]
        unstable = frozenset(int(k) for k in unstable)
        n = len(mats)
        subs = tuple(
            Subsystem(i, a, UNSTABLE if i in unstable else STABLE)
            for i, a in enumerate(mats, start=1)
        )
        graph = TransitionGraph.complete(n) if edges is None else TransitionGraph(n, frozenset(edges))
        ids = frozenset(range(1, n + 1))
        d = mats[0].shape[0] if mats else 0
        return cls(subs, d, graph, ids - unstable, unstable)

    @property
    def n(self) -> int:
        return len(self.subsystems)

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.subsystems]

    @property
    def partition(self) -> tuple[frozenset, frozenset]:
        return self.stable, self.unstable

    @property
    def is_linear(self) -> bool:
        return all(s.is_linear for s in self.subsystems)

    def subsystem(self, i: int) -> Subsystem:
        for s in self.subsystems:
            if s.id == i:
                return s
        raise UnknownSubsystemError(f"unknown subsystem {i}")

    def matrix(self, i: int) -> np.ndarray:
        return self.subsystem(i).matrix


def spectral_abscissa(a: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(a).real))


def validate_family(family: SwitchedFamily) -> list[str]:
    """Return one ``"field: problem"`` string per broken invariant."""
    out = []
    ids = [s.id for s in family.subsystems]
    n = len(ids)
    if n < 1:
        out.append("subsystems: family must contain at least one subsystem")
    if len(set(ids)) != n:
        out.append("subsystems: duplicate subsystem ids")
    if set(ids) != set(range(1, n + 1)):
        out.append(f"subsystems: ids must be exactly 1..{n}")
    if family.dimension < 1:
        out.append("dimension: d must be >= 1")
    if family.graph.n != n:
        out.append(f"graph: vertex count {family.graph.n} does not match {n} subsystems")

    valid = set(ids)
    for i, j in sorted(family.graph.edges):
        if i == j:
            out.append(f"edges: self-loop on vertex {i}")
        for v in (i, j):
            if v not in valid:
                out.append(f"edges: endpoint {v} of ({i}, {j}) is not a subsystem")

    overlap = family.stable & family.unstable
    if overlap:
        out.append(f"partition: partition overlap on {sorted(overlap)}")
    if (family.stable | family.unstable) != valid:
        out.append("partition: stable and unstable sets do not cover the index set")

    d = family.dimension
    for s in family.subsystems:
        if s.declared_class not in (STABLE, UNSTABLE):
            out.append(f"subsystems[{s.id}].class: unknown class {s.declared_class!r}")
        elif s.declared_class == STABLE and s.id not in family.stable:
            out.append(f"subsystems[{s.id}].class: declared stable but not in the stable set")
        elif s.declared_class == UNSTABLE and s.id not in family.unstable:
            out.append(f"subsystems[{s.id}].class: declared unstable but not in the unstable set")

        if s.is_linear:
            a = np.asarray(s.dynamics)
            if a.ndim != 2 or a.shape != (d, d):
                out.append(f"subsystems[{s.id}].matrix: expected shape ({d}, {d}), got {a.shape}")
                continue
            if not np.all(np.isfinite(a)):
                out.append(f"subsystems[{s.id}].matrix: non-finite entries")
                continue
            hurwitz = spectral_abscissa(a) < -HURWITZ_TOL
            if s.declared_class == STABLE and not hurwitz:
                out.append(f"subsystems[{s.id}].class: declared stable but matrix is not Hurwitz")
            if s.declared_class == UNSTABLE and hurwitz:
                out.append(f"subsystems[{s.id}].class: declared unstable but matrix is Hurwitz")
        else:
            try:
                f0 = np.asarray(s.dynamics(np.zeros(d)), dtype=float)
            except Exception as exc:  # user callback
                out.append(f"subsystems[{s.id}].dynamics: evaluation at the origin failed ({exc})")
                continue
            if f0.shape != (d,):
                out.append(f"subsystems[{s.id}].dynamics: returned shape {f0.shape}, expected ({d},)")
            elif np.any(f0 != 0):
                out.append(f"subsystems[{s.id}].dynamics: f(0) != 0")
    return out


def is_admissible(family: SwitchedFamily, i: int, j: int) -> bool:
    valid = set(family.ids)
    for v in (i, j):
        if v not in valid:
            raise UnknownSubsystemError(f"unknown subsystem {v}")
    return (i, j) in family.graph.edges


def is_complete(graph: TransitionGraph, n: int) -> bool:
    if n < 1:
        raise ValueError("n must be >= 1")
    return graph.edges == frozenset(permutations(range(1, n + 1), 2))
