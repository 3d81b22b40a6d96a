"""Communication graph and repulsive inter-agent potentials.

Each edge carries a scalar profile f applied to the squared Riemannian
distance between the two agents, V(g_j, g_k) = f(d^2(g_j, g_k)).  Because the
distance is left-invariant the potential only sees the relative pose
h = g_j^{-1} g_k, and its gradient lives in the algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .algebra import AlgebraVector, GroupElement
from .geodesics import GeodesicSettings, distance, riemannian_log
from .geometry import Metric

_DEFAULT_GEO = GeodesicSettings()
_FD_STEP = 1e-5


class Potential:
    """Scalar profile f of squared distance; subclasses define value/slope."""

    def value(self, d2):
        raise NotImplementedError

    def slope(self, d2):
        """Derivative f'(d2); must be <= 0 for a repulsive profile."""
        raise NotImplementedError


@dataclass(frozen=True)
class InverseShifted(Potential):
    """f(x) = gain / (x + shift); grows large as agents approach."""

    gain: float = 1.0
    shift: float = 1.0

    def __post_init__(self):
        if self.gain < 0.0:
            raise ValueError("gain must be non-negative")
        if self.shift <= 0.0:
            raise ValueError("shift must be positive")

    def value(self, d2):
        return self.gain / (d2 + self.shift)

    def slope(self, d2):
        return -self.gain / (d2 + self.shift) ** 2


@dataclass(frozen=True)
class Gaussian(Potential):
    """f(x) = gain * exp(-x / width^2); negligible for well-separated agents."""

    gain: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.gain < 0.0:
            raise ValueError("gain must be non-negative")
        if self.width <= 0.0:
            raise ValueError("width must be positive")

    def value(self, d2):
        return self.gain * np.exp(-d2 / self.width**2)

    def slope(self, d2):
        return -self.gain / self.width**2 * np.exp(-d2 / self.width**2)


@dataclass(frozen=True)
class Zero(Potential):
    """No interaction; the baseline for plain cubics."""

    def value(self, d2):
        return np.zeros_like(np.asarray(d2, dtype=float)) if np.ndim(d2) else 0.0

    def slope(self, d2):
        return np.zeros_like(np.asarray(d2, dtype=float)) if np.ndim(d2) else 0.0


_FAMILIES = {
    "inverse_shifted": lambda gain, shape: InverseShifted(gain=gain, shift=shape),
    "gaussian": lambda gain, shape: Gaussian(gain=gain, width=shape),
    "zero": lambda gain, shape: Zero(),
}


def make_potential(family: str, gain: float = 1.0, shape: float = 1.0) -> Potential:
    try:
        return _FAMILIES[family](gain, shape)
    except KeyError:
        raise ValueError(f"unknown potential family {family!r}") from None


@dataclass(frozen=True)
class Graph:
    """Undirected, time-invariant neighbor graph on 0-based agent indices."""

    agent_count: int
    edges: frozenset = frozenset()

    def __post_init__(self):
        if self.agent_count < 1:
            raise ValueError("agent_count must be at least 1")
        canon = set()
        for e in self.edges:
            j, k = int(e[0]), int(e[1])
            if j == k:
                raise ValueError(f"self-loop edge ({j}, {k})")
            if not (0 <= j < self.agent_count and 0 <= k < self.agent_count):
                raise ValueError(f"edge ({j}, {k}) references a missing agent")
            canon.add((min(j, k), max(j, k)))
        object.__setattr__(self, "edges", frozenset(canon))

    def neighbors(self, j: int) -> tuple:
        out = []
        for a, b in self.edges:
            if a == j:
                out.append(b)
            elif b == j:
                out.append(a)
        return tuple(sorted(out))

    @property
    def sorted_edges(self) -> tuple:
        return tuple(sorted(self.edges))


@dataclass(frozen=True)
class EdgePotentials:
    """Per-edge potential assignment: a default plus optional overrides."""

    default: Potential = field(default_factory=Zero)
    overrides: Mapping = field(default_factory=dict)

    def __post_init__(self):
        canon = {}
        for (j, k), pot in dict(self.overrides).items():
            canon[(min(j, k), max(j, k))] = pot
        object.__setattr__(self, "overrides", canon)

    def for_edge(self, j: int, k: int) -> Potential:
        return self.overrides.get((min(j, k), max(j, k)), self.default)

    def is_zero(self, graph: Graph) -> bool:
        return all(isinstance(self.for_edge(j, k), Zero) for j, k in graph.edges)


ZERO_POTENTIALS = EdgePotentials()


def eval_potential(pot: Potential, metric: Metric, h: GroupElement,
                   settings: GeodesicSettings = _DEFAULT_GEO) -> float:
    """Potential value at relative pose h, i.e. f(d^2(e, h))."""
    d = distance(metric, metric.algebra.identity(), h, settings)
    return float(pot.value(d * d))


def grad_potential(pot: Potential, metric: Metric, h: GroupElement,
                   settings: GeodesicSettings = _DEFAULT_GEO,
                   method: str = "log") -> AlgebraVector:
    """Gradient of the potential in its first agent slot, at the identity.

    Uses grad of half the squared distance being minus the Riemannian
    logarithm, so grad = -2 f'(d^2) log(e, h).  ``method='fd'`` replaces the
    chain rule with central finite differences of the value along basis
    directions (the index is raised through the metric afterwards).
    """
    alg = metric.algebra
    if isinstance(pot, Zero):
        return np.zeros(alg.dim)
    if method == "log":
        u = riemannian_log(metric, alg.identity(), h, settings)
        d2 = metric.inner(u, u)
        return -2.0 * float(pot.slope(d2)) * u
    if method == "fd":
        diff = np.zeros(alg.dim)
        for d in range(alg.dim):
            e = np.zeros(alg.dim)
            e[d] = _FD_STEP
            hp = alg.compose(alg.exp(-e), h)
            hm = alg.compose(alg.exp(e), h)
            diff[d] = (eval_potential(pot, metric, hp, settings)
                       - eval_potential(pot, metric, hm, settings)) / (2.0 * _FD_STEP)
        return metric.sharp(diff)
    raise ValueError(f"unknown gradient method {method!r}")


def agent_force(graph: Graph, potentials: EdgePotentials, metric: Metric,
                agent: int, rel_poses: Mapping,
                settings: GeodesicSettings = _DEFAULT_GEO,
                method: str = "log") -> AlgebraVector:
    """Total repulsive forcing on one agent: minus the sum of edge gradients.

    ``rel_poses`` must map exactly the agent's neighbors r to the relative
    pose g_agent^{-1} g_r.
    """
    nbrs = graph.neighbors(agent)
    if set(rel_poses.keys()) != set(nbrs):
        raise ValueError(
            f"rel_poses keys {sorted(rel_poses.keys())} do not match "
            f"neighbors {list(nbrs)} of agent {agent}"
        )
    force = np.zeros(metric.algebra.dim)
    for r in nbrs:
        pot = potentials.for_edge(agent, r)
        force -= grad_potential(pot, metric, rel_poses[r], settings, method)
    return force
