"""Reduced multi-agent jet dynamics and their initial-value integration.

Two equivalent charts for the third-order system are supported.  In the
covariant chart each agent carries (xi0, xi1, xi2): body velocity and its
first two covariant derivatives.  With a bi-invariant metric the system also
closes in plain time derivatives (xi, xi', xi''), the derivative chart, where
the only nonlinearity left is a single bracket.

Integration is a Runge-Kutta-Munthe-Kaas step of order four: the algebra
jets take classical RK4 stages while each group element is reconstructed
through the exponential of an algebra increment, so poses never leave the
group.  Relative poses feeding the potentials are recomputed from the group
elements each stage by default; integrating their own ODE is kept as an
option with drift monitoring.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algebra import (SO3 as SO3_KIND, AlgebraVector, GroupElement,
                      LieAlgebra, so3_exp_batch, so3_log)
from .errors import BiInvariantRequiredError, NonFiniteStateError
from .geodesics import GeodesicSettings
from .geometry import Metric
from .potentials import EdgePotentials, Graph, Zero, agent_force

LEFT_INVARIANT = "left-invariant"
BI_INVARIANT = "bi-invariant"

COVARIANT = "covariant"
DERIVATIVE = "derivative"

RECOMPUTE = "recompute"
INTEGRATE_ODE = "integrate_ode"

_CHART_OF = {LEFT_INVARIANT: COVARIANT, BI_INVARIANT: DERIVATIVE}


@dataclass(frozen=True)
class AgentJet:
    """One agent's pose plus its three algebra jets (chart-dependent)."""

    g: GroupElement
    xi0: AlgebraVector
    xi1: AlgebraVector
    xi2: AlgebraVector


@dataclass(frozen=True)
class SystemState:
    t: float
    jets: tuple

    @property
    def agent_count(self) -> int:
        return len(self.jets)


@dataclass(frozen=True)
class IntegratorSettings:
    step: float = 1e-3
    scheme: str = "rkmk4"
    hjk_policy: str = RECOMPUTE

    def __post_init__(self):
        if self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.scheme != "rkmk4":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.hjk_policy not in (RECOMPUTE, INTEGRATE_ODE):
            raise ValueError(f"unknown hjk policy {self.hjk_policy!r}")


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled jets and reconstructed poses for all agents.

    ``poses`` has shape (s, n+1, ...) matching the group's element shape and
    ``jets`` has shape (s, n+1, 3, dim).  ``chart`` records which jet chart
    the rows live in.
    """

    times: np.ndarray
    poses: np.ndarray
    jets: np.ndarray
    chart: str
    hjk_drift: Optional[float] = None
    hjk_drift_series: Optional[np.ndarray] = None

    @property
    def agent_count(self) -> int:
        return self.poses.shape[0]

    @property
    def node_count(self) -> int:
        return self.times.shape[0]

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    def agent_jet(self, agent: int, node: int) -> AgentJet:
        return AgentJet(
            g=self.poses[agent, node].copy(),
            xi0=self.jets[agent, node, 0].copy(),
            xi1=self.jets[agent, node, 1].copy(),
            xi2=self.jets[agent, node, 2].copy(),
        )

    def system_state(self, node: int) -> SystemState:
        return SystemState(
            t=float(self.times[node]),
            jets=tuple(self.agent_jet(j, node) for j in range(self.agent_count)),
        )


def relative_pose_rows(algebra: LieAlgebra, graph: Graph, poses) -> dict:
    """Per-agent map r -> g_j^{-1} g_r over the graph's neighbor sets."""
    rows = {j: {} for j in range(graph.agent_count)}
    for j, k in graph.edges:
        h = algebra.compose(algebra.inverse(poses[j]), poses[k])
        rows[j][k] = h
        rows[k][j] = algebra.inverse(h)
    return rows


def _forces(metric, graph, potentials, rows, geo_settings, grad_method):
    out = []
    for j in range(graph.agent_count):
        if not graph.neighbors(j):
            out.append(np.zeros(metric.algebra.dim))
        else:
            out.append(agent_force(graph, potentials, metric, j, rows[j],
                                   geo_settings, grad_method))
    return out


def jet_rates_left_invariant(metric: Metric, graph: Graph,
                             potentials: EdgePotentials, state: SystemState,
                             rel_rows: Optional[dict] = None,
                             geo_settings: GeodesicSettings = GeodesicSettings(),
                             grad_method: str = "log") -> list:
    """Covariant-chart jet rates for every agent.

    xi0' = xi1 - conn(xi0, xi0)
    xi1' = xi2 - conn(xi0, xi1)
    xi2' = -conn(xi0, xi2) - R(xi1, xi0) xi0 + force
    """
    if rel_rows is None:
        rel_rows = relative_pose_rows(metric.algebra, graph,
                                      [jet.g for jet in state.jets])
    forces = _forces(metric, graph, potentials, rel_rows, geo_settings, grad_method)
    rates = []
    for j, jet in enumerate(state.jets):
        d0 = jet.xi1 - metric.connection(jet.xi0, jet.xi0)
        d1 = jet.xi2 - metric.connection(jet.xi0, jet.xi1)
        d2 = (-metric.connection(jet.xi0, jet.xi2)
              - metric.curvature(jet.xi1, jet.xi0, jet.xi0)
              + forces[j])
        rates.append((d0, d1, d2))
    return rates


def jet_rates_bi_invariant(metric: Metric, graph: Graph,
                           potentials: EdgePotentials, state: SystemState,
                           rel_rows: Optional[dict] = None,
                           geo_settings: GeodesicSettings = GeodesicSettings(),
                           grad_method: str = "log") -> list:
    """Derivative-chart jet rates: xi''' = -[xi, xi''] + force."""
    if not metric.bi_invariant:
        raise BiInvariantRequiredError(
            "derivative-chart rates need a metric flagged bi-invariant"
        )
    if rel_rows is None:
        rel_rows = relative_pose_rows(metric.algebra, graph,
                                      [jet.g for jet in state.jets])
    forces = _forces(metric, graph, potentials, rel_rows, geo_settings, grad_method)
    alg = metric.algebra
    rates = []
    for j, jet in enumerate(state.jets):
        rates.append((jet.xi1, jet.xi2,
                      -alg.bracket(jet.xi0, jet.xi2) + forces[j]))
    return rates


def convert_jets(metric: Metric, jet: AgentJet, to: str) -> AgentJet:
    """Switch one agent's jets between the covariant and derivative charts.

    xi = xi0, xi' = xi1, xi'' = xi2 - [xi0, xi1]/2 (and back).
    """
    if not (metric.bi_invariant or metric.algebra.is_abelian):
        raise BiInvariantRequiredError("chart conversion needs a bi-invariant metric")
    alg = metric.algebra
    half = 0.5 * alg.bracket(jet.xi0, jet.xi1)
    if to == DERIVATIVE:
        return AgentJet(jet.g, jet.xi0.copy(), jet.xi1.copy(), jet.xi2 - half)
    if to == COVARIANT:
        return AgentJet(jet.g, jet.xi0.copy(), jet.xi1.copy(), jet.xi2 + half)
    raise ValueError(f"unknown chart {to!r}")


class _RateEvaluator:
    """Array-form stage rates for the integrator's inner loop.

    Operates on stacked agent arrays to avoid per-stage object churn; the
    formulas are identical to jet_rates_left_invariant /
    jet_rates_bi_invariant, and edge forces reuse one logarithm per edge
    (the two endpoints see opposite gradients).
    """

    def __init__(self, metric, graph, potentials, formulation, geo, grad_method):
        self.metric = metric
        self.alg = metric.algebra
        self.graph = graph
        self.potentials = potentials
        self.left = formulation == LEFT_INVARIANT
        self.geo = geo
        self.grad_method = grad_method
        self.Gt = metric.connection_table
        self.Rt = metric.curvature_table
        self.c = self.alg.structure_constants
        self.Mmat = metric.matrix
        self.active_edges = [
            (e, potentials.for_edge(*e)) for e in graph.sorted_edges
            if not isinstance(potentials.for_edge(*e), Zero)
        ]
        from .geodesics import has_closed_form

        self.fast_forces = grad_method == "log" and has_closed_form(metric)

    def _rel(self, g_arr, a, b):
        if self.alg.is_abelian:
            return g_arr[b] - g_arr[a]
        return g_arr[a].T @ g_arr[b]

    def forces(self, g_arr, rel_lookup=None):
        s = self.graph.agent_count
        F = np.zeros((s, self.alg.dim))
        if not self.active_edges:
            return F
        for (a, b), pot in self.active_edges:
            h_ab = (rel_lookup[(a, b)] if rel_lookup is not None
                    else self._rel(g_arr, a, b))
            if self.fast_forces:
                if self.alg.is_abelian:
                    u = h_ab
                elif self.alg.kind == SO3_KIND:
                    u = so3_log(h_ab)
                else:
                    u = self.alg.log(h_ab)
                d2 = float(u @ self.Mmat @ u)
                coef = 2.0 * float(pot.slope(d2))
                F[a] += coef * u
                F[b] -= coef * u
            else:
                from .potentials import grad_potential

                F[a] -= grad_potential(pot, self.metric, h_ab, self.geo,
                                       self.grad_method)
                F[b] -= grad_potential(pot, self.metric,
                                       self.alg.inverse(h_ab), self.geo,
                                       self.grad_method)
        return F

    def jet_rates(self, g_arr, J, rel_lookup=None):
        F = self.forces(g_arr, rel_lookup)
        xi0, xi1, xi2 = J[:, 0], J[:, 1], J[:, 2]
        if self.left:
            d0 = xi1 - np.einsum("dab,sa,sb->sd", self.Gt, xi0, xi0)
            d1 = xi2 - np.einsum("dab,sa,sb->sd", self.Gt, xi0, xi1)
            d2 = (-np.einsum("dab,sa,sb->sd", self.Gt, xi0, xi2)
                  - np.einsum("dabc,sa,sb,sc->sd", self.Rt, xi1, xi0, xi0)
                  + F)
        else:
            d0 = xi1
            d1 = xi2
            d2 = -np.einsum("kij,si,sj->sk", self.c, xi0, xi2) + F
        return np.stack([d0, d1, d2], axis=1)

    def dexpinv(self, theta, xi):
        b1 = np.einsum("kij,si,sj->sk", self.c, theta, xi)
        b2 = np.einsum("kij,si,sj->sk", self.c, theta, b1)
        return xi + 0.5 * b1 + b2 / 12.0

    def compose_exp(self, g_arr, theta):
        if self.alg.is_abelian:
            return g_arr + theta
        if self.alg.kind == SO3_KIND:
            return g_arr @ so3_exp_batch(theta)
        return np.stack([self.alg.compose(g_arr[j], self.alg.exp(theta[j]))
                         for j in range(g_arr.shape[0])])

    def project(self, g_arr):
        if self.alg.is_abelian:
            return g_arr
        return np.stack([self.alg.project(g_arr[j])
                         for j in range(g_arr.shape[0])])


def integrate_ivp(metric: Metric, graph: Graph, potentials: EdgePotentials,
                  state0: SystemState, duration: float,
                  settings: IntegratorSettings = IntegratorSettings(),
                  formulation: str = LEFT_INVARIANT,
                  geo_settings: GeodesicSettings = GeodesicSettings(),
                  grad_method: str = "log") -> Trajectory:
    """Integrate the reduced system forward by ``duration``.

    The step is adjusted to divide the interval exactly (n = round(T/h)).
    """
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if formulation not in _CHART_OF:
        raise ValueError(f"unknown formulation {formulation!r}")
    if formulation == BI_INVARIANT and not metric.bi_invariant:
        raise BiInvariantRequiredError(
            "bi-invariant formulation needs a metric flagged bi-invariant"
        )
    if graph.agent_count != state0.agent_count:
        raise ValueError("state agent count does not match the graph")

    alg = metric.algebra
    s, dim = graph.agent_count, alg.dim
    n = max(1, round(duration / settings.step))
    h = duration / n
    edges = graph.sorted_edges
    use_ode_rel = settings.hjk_policy == INTEGRATE_ODE and bool(edges)

    g = np.stack([alg.check_element(jet.g) for jet in state0.jets]).astype(float)
    J = np.stack([[jet.xi0, jet.xi1, jet.xi2] for jet in state0.jets]).astype(float)

    ev = _RateEvaluator(metric, graph, potentials, formulation, geo_settings,
                        grad_method)
    times = state0.t + np.linspace(0.0, duration, n + 1)
    poses = np.empty((s, n + 1) + g.shape[1:])
    jets = np.empty((s, n + 1, 3, dim))
    poses[:, 0] = g
    jets[:, 0] = J

    if use_ode_rel:
        rel = np.stack([ev._rel(g, a, b) for (a, b) in edges])
        drift_series = np.zeros(n + 1)
    else:
        rel, drift_series = None, None

    def rel_rates(rel_stage, xi0):
        out = np.empty_like(rel_stage)
        for i, (a, b) in enumerate(edges):
            if alg.is_abelian:
                out[i] = xi0[b] - xi0[a]
            else:
                out[i] = (-alg.hat(xi0[a]) @ rel_stage[i]
                          + rel_stage[i] @ alg.hat(xi0[b]))
        return out

    def stage(theta, J_stage, rel_stage):
        g_stage = ev.compose_exp(g, theta)
        lookup = (dict(zip(edges, rel_stage)) if rel_stage is not None else None)
        dJ = ev.jet_rates(g_stage, J_stage, lookup)
        dTheta = ev.dexpinv(theta, J_stage[:, 0])
        dRel = rel_rates(rel_stage, J_stage[:, 0]) if rel_stage is not None else None
        return dTheta, dJ, dRel

    zero_theta = np.zeros((s, dim))
    for step_idx in range(n):
        k1 = stage(zero_theta, J, rel)
        k2 = stage(0.5 * h * k1[0], J + 0.5 * h * k1[1],
                   None if rel is None else rel + 0.5 * h * k1[2])
        k3 = stage(0.5 * h * k2[0], J + 0.5 * h * k2[1],
                   None if rel is None else rel + 0.5 * h * k2[2])
        k4 = stage(h * k3[0], J + h * k3[1],
                   None if rel is None else rel + h * k3[2])

        theta = (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        J = J + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        if not np.all(np.isfinite(J)) or not np.all(np.isfinite(theta)):
            raise NonFiniteStateError(
                f"non-finite state at t = {times[step_idx]:.6g}; step rejected"
            )
        g = ev.project(ev.compose_exp(g, theta))
        if use_ode_rel:
            rel = rel + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            drift_series[step_idx + 1] = max(
                np.abs(rel[i] - ev._rel(g, a, b)).max()
                for i, (a, b) in enumerate(edges))
        poses[:, step_idx + 1] = g
        jets[:, step_idx + 1] = J

    return Trajectory(
        times=times, poses=poses, jets=jets, chart=_CHART_OF[formulation],
        hjk_drift=float(drift_series.max()) if use_ode_rel else None,
        hjk_drift_series=drift_series,
    )


def trajectory_to_chart(metric: Metric, traj: Trajectory, chart: str) -> Trajectory:
    """Re-express all stored jets in the requested chart."""
    if chart == traj.chart:
        return traj
    c = metric.algebra.structure_constants
    br = np.einsum("kij,sni,snj->snk", c, traj.jets[:, :, 0], traj.jets[:, :, 1])
    sign = -0.5 if chart == DERIVATIVE else 0.5
    if chart not in (COVARIANT, DERIVATIVE):
        raise ValueError(f"unknown chart {chart!r}")
    if not (metric.bi_invariant or metric.algebra.is_abelian):
        raise BiInvariantRequiredError("chart conversion needs a bi-invariant metric")
    jets = traj.jets.copy()
    jets[:, :, 2] += sign * br
    return Trajectory(times=traj.times, poses=traj.poses, jets=jets, chart=chart,
                      hjk_drift=traj.hjk_drift,
                      hjk_drift_series=traj.hjk_drift_series)


def cubic_first_integral(metric: Metric, traj: Trajectory) -> np.ndarray:
    """Conserved quantity of potential-free cubics, per agent and node.

    I = <xi2, xi0> - 0.5 <xi1, xi1> in the covariant chart; constant along
    solutions because the curvature term is metric-antisymmetric.
    """
    if traj.chart != COVARIANT:
        traj = trajectory_to_chart(metric, traj, COVARIANT)
    M = metric.matrix
    xi0, xi1, xi2 = traj.jets[:, :, 0], traj.jets[:, :, 1], traj.jets[:, :, 2]
    return (np.einsum("snd,de,sne->sn", xi2, M, xi0)
            - 0.5 * np.einsum("snd,de,sne->sn", xi1, M, xi1))
