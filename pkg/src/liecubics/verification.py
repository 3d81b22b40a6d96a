"""Independent checks on computed trajectories.

Three kinds of evidence, none of which reuses the reduced integrator:
the action functional evaluated by quadrature, a finite-difference residual
of the fourth-order optimality equations reconstructed from pose samples
alone, and a direct minimization of a discretized action over group-valued
nodes.  Agreement between these and the shooting solver is what validates
the reduced formulation end to end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import cho_factor, cho_solve

from .algebra import ABELIAN, SO3, LieAlgebra, so3_log_batch
from .bvp import BoundaryConditions
from .dynamics import Trajectory
from .errors import InsufficientSamplesError, MaxIterationsError
from .geodesics import GeodesicSettings, distance, has_closed_form
from .geometry import Metric
from .potentials import EdgePotentials, Graph, Zero, grad_potential

_GEO = GeodesicSettings()
_TRAPZ = np.trapezoid if hasattr(np, "trapezoid") else np.trapz


@dataclass(frozen=True)
class DiscretePath:
    """Group-valued nodes at uniform times, one row of nodes per agent."""

    times: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        nodes = np.asarray(self.nodes, dtype=float)
        if times.ndim != 1 or times.size < 5:
            raise ValueError("a discrete path needs at least 4 segments")
        dt = np.diff(times)
        if np.abs(dt - dt[0]).max() > 1e-9 * max(1.0, abs(dt[0])):
            raise ValueError("path times must be uniformly spaced")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", nodes)

    @property
    def agent_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def segments(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def with_nodes(self, nodes) -> "DiscretePath":
        return DiscretePath(times=self.times, nodes=np.asarray(nodes, dtype=float))


@dataclass(frozen=True)
class ResidualReport:
    """Optimality-equation residual norms at interior sample times."""

    times: np.ndarray
    norms: np.ndarray
    fd_step: float

    @property
    def max_norm(self) -> float:
        return float(self.norms.max())


@dataclass(frozen=True)
class OracleSettings:
    gradient_tolerance: float = 1e-4
    max_iterations: int = 200
    fd_step: float = 1e-6
    initial_step: float = 1.0
    max_backtracks: int = 40
    precondition: bool = True


@dataclass(frozen=True)
class OracleResult:
    path: DiscretePath
    value: float
    gradient_norm: float
    iterations: int
    converged: bool
    history: np.ndarray


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _segment_logs(algebra: LieAlgebra, nodes: np.ndarray) -> np.ndarray:
    """log(g_k^{-1} g_{k+1}) for one agent's node row, shape (n, dim)."""
    if algebra.kind == ABELIAN:
        return np.diff(nodes, axis=0)
    if algebra.kind == SO3:
        rel = np.einsum("kji,kjl->kil", nodes[:-1], nodes[1:])
        return so3_log_batch(rel)
    out = np.empty((nodes.shape[0] - 1, algebra.dim))
    for k in range(out.shape[0]):
        out[k] = algebra.log(algebra.compose(algebra.inverse(nodes[k]), nodes[k + 1]))
    return out


def _pairwise_d2(metric: Metric, ga: np.ndarray, gb: np.ndarray,
                 geo: GeodesicSettings = _GEO) -> np.ndarray:
    """Squared distances between matched node rows, shape (n,)."""
    alg = metric.algebra
    if has_closed_form(metric):
        if alg.kind == ABELIAN:
            u = gb - ga
        elif alg.kind == SO3:
            u = so3_log_batch(np.einsum("kji,kjl->kil", ga, gb))
        else:
            u = np.stack([alg.log(alg.compose(alg.inverse(ga[k]), gb[k]))
                          for k in range(ga.shape[0])])
        return np.einsum("kd,de,ke->k", u, metric.matrix, u)
    return np.array([
        distance(metric, ga[k], gb[k], geo)**2 for k in range(ga.shape[0])
    ])


def _edge_potential_series(metric, graph, potentials, nodes, geo=_GEO):
    """Sum over edges of V at every node, shape (n_nodes,)."""
    n = nodes.shape[1]
    total = np.zeros(n)
    for (a, b) in graph.sorted_edges:
        pot = potentials.for_edge(a, b)
        if isinstance(pot, Zero):
            continue
        d2 = _pairwise_d2(metric, nodes[a], nodes[b], geo)
        total += np.asarray(pot.value(d2), dtype=float)
    return total


# ---------------------------------------------------------------------------
# action functional on smooth trajectories
# ---------------------------------------------------------------------------


def evaluate_cost(metric: Metric, graph: Graph, potentials: EdgePotentials,
                  traj: Trajectory, geo: GeodesicSettings = _GEO) -> float:
    """Composite-Simpson value of the action along an integrated trajectory.

    The covariant acceleration norm equals the metric norm of the second jet
    by left invariance, and that jet coincides in both charts, so no chart
    conversion is needed.
    """
    M = metric.matrix
    acc = np.einsum("snd,de,sne->sn", traj.jets[:, :, 1], M, traj.jets[:, :, 1])
    integrand = 0.5 * acc.sum(axis=0)
    if not potentials.is_zero(graph):
        integrand = integrand + _edge_potential_series(
            metric, graph, potentials, traj.poses, geo)
    return float(simpson(integrand, x=traj.times))


# ---------------------------------------------------------------------------
# finite-difference residual of the optimality equations
# ---------------------------------------------------------------------------


def unreduced_residual(metric: Metric, graph: Graph, potentials: EdgePotentials,
                       traj: Trajectory, fd_step: float,
                       geo: GeodesicSettings = _GEO,
                       grad_method: str = "log") -> ResidualReport:
    """Check the fourth-order optimality equations directly on pose samples.

    Body velocities are rebuilt from group logarithms of incremental
    displacements (the stored jets are never consulted), higher jets follow
    by repeated central differencing plus the connection correction, and the
    report holds the equation residual norm at each interior sample.  The
    differencing step snaps to a multiple of the trajectory grid; the step
    actually used is recorded in the report.
    """
    if fd_step <= 0.0:
        raise ValueError("fd_step must be positive")
    h_grid = traj.step
    if h_grid > 4.0 * fd_step:
        raise InsufficientSamplesError(
            f"trajectory grid {h_grid:g} is coarser than 4 x fd_step {fd_step:g}"
        )
    stride = max(1, round(fd_step / h_grid))
    delta = stride * h_grid
    sub = np.arange(0, traj.node_count, stride)
    m = sub.size - 1
    if m < 8:
        raise InsufficientSamplesError(
            "need at least 8 subsampled segments for the interior stencils"
        )
    alg = metric.algebra
    G = metric.connection_table
    R4 = metric.curvature_table
    Mmat = metric.matrix
    s = traj.agent_count
    interior = np.arange(4, m - 3)  # residual samples
    norms = np.empty((s, interior.size))
    sub_nodes = traj.poses[:, sub]

    forces = np.zeros((s, interior.size, alg.dim))
    if not potentials.is_zero(graph):
        for j in range(s):
            for r in graph.neighbors(j):
                pot = potentials.for_edge(j, r)
                for idx, k in enumerate(interior):
                    h_rel = alg.compose(alg.inverse(sub_nodes[j, k]),
                                        sub_nodes[r, k])
                    forces[j, idx] += grad_potential(pot, metric, h_rel, geo,
                                                     grad_method)

    for j in range(s):
        u = _segment_logs(alg, sub_nodes[j])  # (m, dim)
        xi0 = (u[:-1] + u[1:]) / (2.0 * delta)             # at sub nodes 1..m-1
        dxi0 = (xi0[2:] - xi0[:-2]) / (2.0 * delta)        # at 2..m-2
        xi0_i = xi0[1:-1]
        xi1 = dxi0 + np.einsum("dab,ka,kb->kd", G, xi0_i, xi0_i)
        dxi1 = (xi1[2:] - xi1[:-2]) / (2.0 * delta)        # at 3..m-3
        xi0_ii = xi0_i[1:-1]
        xi2 = dxi1 + np.einsum("dab,ka,kb->kd", G, xi0_ii, xi1[1:-1])
        dxi2 = (xi2[2:] - xi2[:-2]) / (2.0 * delta)        # at 4..m-4
        xi0_c = xi0_ii[1:-1]
        xi1_c = xi1[1:-1][1:-1]
        xi2_c = xi2[1:-1]
        res = (dxi2
               + np.einsum("dab,ka,kb->kd", G, xi0_c, xi2_c)
               + np.einsum("dabc,ka,kb,kc->kd", R4, xi1_c, xi0_c, xi0_c)
               + forces[j])
        norms[j] = np.sqrt(np.einsum("kd,de,ke->k", res, Mmat, res))
    return ResidualReport(times=traj.times[sub[interior]], norms=norms,
                          fd_step=delta)


# ---------------------------------------------------------------------------
# discretized action on group-valued nodes
# ---------------------------------------------------------------------------


def _interior_accels(metric, xi, dt):
    """Covariant accelerations at nodes 1..N-1 from one agent's segment logs."""
    G = metric.connection_table
    bar = 0.5 * (xi[:-1] + xi[1:])
    return (xi[1:] - xi[:-1]) / dt + np.einsum("dab,ka,kb->kd", G, bar, bar)


def _boundary_accels(xi, dt, bc_agent):
    """End accelerations from the pinned nodes and the endpoint velocities.

    The first segment velocity sits half a step in from the boundary, so
    2 (xi_0 - v_a)/dt recovers the boundary acceleration to first order
    using pinned data only; this keeps the free-node gradient of the
    discretized action consistent with the continuum optimality equations.
    """
    va = np.asarray(bc_agent.v_start, dtype=float)
    vb = np.asarray(bc_agent.v_end, dtype=float)
    return 2.0 * (xi[0] - va) / dt, 2.0 * (vb - xi[-1]) / dt


def discrete_cost(metric: Metric, graph: Graph, potentials: EdgePotentials,
                  path: DiscretePath,
                  bc: Optional[BoundaryConditions] = None,
                  geo: GeodesicSettings = _GEO) -> float:
    """Trapezoid value of the action on a discrete path.

    Segment velocities are group logarithms of relative node displacements
    divided by the step; covariant accelerations difference them and add the
    connection correction at the two-sided average.  Boundary accelerations
    come from the prescribed endpoint velocities when ``bc`` is given and
    from linear extrapolation otherwise.
    """
    dt = path.dt
    Mmat = metric.matrix
    accel_total = 0.0
    for j in range(path.agent_count):
        xi = _segment_logs(metric.algebra, path.nodes[j]) / dt
        a = _interior_accels(metric, xi, dt)
        if bc is not None:
            a0, aN = _boundary_accels(xi, dt, bc.agents[j])
        else:
            a0 = 2.0 * a[0] - a[1]
            aN = 2.0 * a[-1] - a[-2]
        sq = np.einsum("kd,de,ke->k", a, Mmat, a)
        accel_total += 0.5 * dt * (
            sq.sum() + 0.5 * float(a0 @ Mmat @ a0) + 0.5 * float(aN @ Mmat @ aN))
    pot = _edge_potential_series(metric, graph, potentials, path.nodes, geo)
    return float(accel_total + _TRAPZ(pot, path.times))


def hermite_path(metric: Metric, bc: BoundaryConditions,
                 segments: int) -> DiscretePath:
    """Seed path from the boundary data: cubic Hermite in the algebra chart.

    Exact for abelian groups; endpoint velocities are otherwise matched to
    first order in the step (the chart curve is g_start exp(q(t))).
    """
    alg = metric.algebra
    T = bc.duration
    times = bc.t_start + np.linspace(0.0, T, segments + 1)
    tloc = np.linspace(0.0, T, segments + 1)
    nodes = np.empty((bc.agent_count, segments + 1) + alg.identity().shape)
    for j, ab in enumerate(bc.agents):
        g_a = np.asarray(ab.g_start, dtype=float)
        u = alg.log(alg.compose(alg.inverse(g_a), np.asarray(ab.g_end, dtype=float)))
        va = np.asarray(ab.v_start, dtype=float)
        vb = np.asarray(ab.v_end, dtype=float)
        a2 = 3.0 * u / T**2 - (2.0 * va + vb) / T
        a3 = -2.0 * u / T**3 + (va + vb) / T**2
        for k, t in enumerate(tloc):
            q = va * t + a2 * t**2 + a3 * t**3
            nodes[j, k] = alg.compose(g_a, alg.exp(q))
    return DiscretePath(times=times, nodes=nodes)


def from_trajectory(traj: Trajectory, segments: Optional[int] = None) -> DiscretePath:
    """Subsample an integrated trajectory onto a discrete path."""
    n = traj.node_count - 1
    if segments is None:
        segments = n
    if n % segments != 0:
        raise ValueError(f"{segments} segments do not divide the {n}-step grid")
    stride = n // segments
    return DiscretePath(times=traj.times[::stride], nodes=traj.poses[:, ::stride])


def perturb_path(path: DiscretePath, scale: float, seed: int,
                 metric: Metric) -> DiscretePath:
    """Randomly displace the free interior nodes in their algebra charts."""
    rng = np.random.default_rng(seed)
    alg = metric.algebra
    nodes = path.nodes.copy()
    N = path.segments
    std = scale / np.sqrt(alg.dim)
    for j in range(path.agent_count):
        for k in range(2, N - 1):
            delta = std * rng.normal(size=alg.dim)
            nodes[j, k] = alg.compose(path.nodes[j, k], alg.exp(delta))
    return path.with_nodes(nodes)


def path_gap(metric: Metric, a: DiscretePath, b: DiscretePath,
             geo: GeodesicSettings = _GEO) -> float:
    """Largest node-wise Riemannian distance between two paths."""
    worst = 0.0
    for j in range(a.agent_count):
        d2 = _pairwise_d2(metric, a.nodes[j], b.nodes[j], geo)
        worst = max(worst, float(np.sqrt(max(d2.max(), 0.0))))
    return worst


# ---------------------------------------------------------------------------
# descent oracle
# ---------------------------------------------------------------------------


def _check_init_matches_bc(metric, bc, path):
    alg = metric.algebra
    dt = path.dt
    for j, ab in enumerate(bc.agents):
        for node, target in ((path.nodes[j, 0], ab.g_start),
                             (path.nodes[j, -1], ab.g_end)):
            gap = np.linalg.norm(
                alg.log(alg.compose(alg.inverse(node),
                                    np.asarray(target, dtype=float))))
            if gap > 1e-8:
                raise ValueError(f"agent {j}: boundary node off by {gap:.3e}")
        for u, v in ((_segment_logs(alg, path.nodes[j, :2]) / dt, ab.v_start),
                     (_segment_logs(alg, path.nodes[j, -2:]) / dt, ab.v_end)):
            gap = np.linalg.norm(u[0] - np.asarray(v, dtype=float))
            if gap > max(1e-8, 10.0 * dt * (1.0 + np.linalg.norm(v))):
                raise ValueError(
                    f"agent {j}: adjacent-node velocity off by {gap:.3e}"
                )


class _LocalCost:
    """Locally recomputable pieces of discrete_cost around one perturbed node.

    Perturbing node k only touches the accelerations at k-1, k, k+1 (plus,
    without boundary data, the extrapolated end terms when k is within three
    nodes of an end) and the potential terms at node k, so central
    differences of the local sum equal central differences of the full
    functional.
    """

    def __init__(self, metric, graph, potentials, path, bc=None, geo=_GEO):
        self.metric = metric
        self.graph = graph
        self.potentials = potentials
        self.path = path
        self.bc = bc
        self.geo = geo
        self.alg = metric.algebra
        self.dt = path.dt
        self.N = path.segments
        self.G = metric.connection_table
        self.M = metric.matrix
        self.xi = [
            _segment_logs(self.alg, path.nodes[j]) / self.dt
            for j in range(path.agent_count)
        ]
        self.has_pot = not potentials.is_zero(graph)

    def _accel(self, xi_of, i):
        prev, nxt = xi_of(i - 1), xi_of(i)
        bar = 0.5 * (prev + nxt)
        return (nxt - prev) / self.dt + np.einsum(
            "dab,a,b->d", self.G, bar, bar)

    def _term_indices(self, k):
        idx = [i for i in (k - 1, k, k + 1) if 1 <= i <= self.N - 1]
        if self.bc is None:
            # Extrapolated end accelerations reach three nodes inward.
            if k <= 3:
                idx.append(0)
            if k >= self.N - 3:
                idx.append(self.N)
        return idx

    def value(self, j, k, node_override=None):
        """Affected part of the action for agent j's node k."""
        base_xi = self.xi[j]
        if node_override is None:
            def xi_of(q):
                return base_xi[q]
        else:
            nodes = self.path.nodes[j]
            xi_km1 = self.alg.log(self.alg.compose(
                self.alg.inverse(nodes[k - 1]), node_override)) / self.dt
            xi_k = self.alg.log(self.alg.compose(
                self.alg.inverse(node_override), nodes[k + 1])) / self.dt

            def xi_of(q):
                if q == k - 1:
                    return xi_km1
                if q == k:
                    return xi_k
                return base_xi[q]

        total = 0.0
        cache = {}

        def accel(i):
            if i not in cache:
                if i == 0:
                    cache[i] = 2.0 * accel(1) - accel(2)
                elif i == self.N:
                    cache[i] = 2.0 * accel(self.N - 1) - accel(self.N - 2)
                else:
                    cache[i] = self._accel(xi_of, i)
            return cache[i]

        for i in self._term_indices(k):
            w = 0.5 if i in (0, self.N) else 1.0
            a = accel(i)
            total += 0.5 * self.dt * w * float(a @ self.M @ a)

        if self.has_pot:
            g_jk = self.path.nodes[j, k] if node_override is None else node_override
            for r in self.graph.neighbors(j):
                pot = self.potentials.for_edge(j, r)
                if isinstance(pot, Zero):
                    continue
                d = distance(self.metric, g_jk, self.path.nodes[r, k], self.geo)
                total += self.dt * float(pot.value(d * d))
        return total


def cost_gradient(metric: Metric, graph: Graph, potentials: EdgePotentials,
                  path: DiscretePath, fd_step: float = 1e-6,
                  bc: Optional[BoundaryConditions] = None,
                  geo: GeodesicSettings = _GEO):
    """Central-difference gradient of discrete_cost in per-node algebra charts.

    Returns (gradient, norm): the gradient is the metric-sharped vector per
    free node, shape (agents, N+1, dim), zero at the four pinned nodes; the
    norm aggregates the metric norms of all free-node components.
    """
    alg = metric.algebra
    N = path.segments
    local = _LocalCost(metric, graph, potentials, path, bc, geo)
    diff = np.zeros((path.agent_count, N + 1, alg.dim))
    for j in range(path.agent_count):
        for k in range(2, N - 1):
            for d in range(alg.dim):
                e = np.zeros(alg.dim)
                e[d] = fd_step
                gp = alg.compose(path.nodes[j, k], alg.exp(e))
                gm = alg.compose(path.nodes[j, k], alg.exp(-e))
                diff[j, k, d] = (local.value(j, k, gp)
                                 - local.value(j, k, gm)) / (2.0 * fd_step)
    chol = cho_factor(metric.matrix)
    flat = diff.reshape(-1, alg.dim)
    grad = cho_solve(chol, flat.T).T.reshape(diff.shape)
    norm = float(np.sqrt(np.einsum("jkd,de,jke->", grad, metric.matrix, grad)))
    return grad, norm


def _quartic_preconditioner(N, dt, n_free):
    """Cholesky factor of the dominant quartic Hessian on the free nodes."""
    D2 = np.zeros((N - 1, n_free))
    for i in range(1, N):
        for node, coef in ((i - 1, 1.0), (i, -2.0), (i + 1, 1.0)):
            if 2 <= node <= N - 2:
                D2[i - 1, node - 2] = coef
    H = (D2.T @ D2) / dt**3
    H += 1e-12 * max(1.0, np.trace(H) / n_free) * np.eye(n_free)
    return cho_factor(H)


def minimize_discrete_cost(metric: Metric, graph: Graph,
                           potentials: EdgePotentials, bc: BoundaryConditions,
                           path: DiscretePath,
                           settings: OracleSettings = OracleSettings(),
                           geo: GeodesicSettings = _GEO) -> OracleResult:
    """Descend discrete_cost over the free interior nodes.

    Gradient descent with Armijo backtracking; the boundary nodes and the
    two velocity-carrying nodes next to them stay fixed.  The descent
    direction is preconditioned with the constant quartic part of the
    Hessian (a pentadiagonal solve per agent and dimension), without which
    the fourth-order stiffness makes plain descent impractically slow; the
    stopping rule still uses the true finite-difference gradient norm.
    Raises MaxIterationsError with the best iterate when the budget runs out.
    """
    _check_init_matches_bc(metric, bc, path)
    alg = metric.algebra
    N = path.segments
    n_free = N - 3
    if n_free < 1:
        raise ValueError("no free interior nodes to optimize")
    chol = (_quartic_preconditioner(N, path.dt, n_free)
            if settings.precondition else None)

    current = path
    value = discrete_cost(metric, graph, potentials, current, bc, geo)
    history = [value]
    grad, gnorm = cost_gradient(metric, graph, potentials, current,
                                settings.fd_step, bc, geo)
    best = (current, value, gnorm)
    iterations = 0
    for iterations in range(settings.max_iterations):
        if gnorm <= settings.gradient_tolerance:
            return OracleResult(path=current, value=value, gradient_norm=gnorm,
                                iterations=iterations, converged=True,
                                history=np.array(history))
        if settings.precondition:
            direction = np.zeros_like(grad)
            for j in range(grad.shape[0]):
                direction[j, 2:N - 1] = -cho_solve(chol, grad[j, 2:N - 1])
        else:
            direction = -grad
        slope = float(np.einsum("jkd,de,jke->", grad, metric.matrix, direction))
        if slope >= 0.0:
            direction = -grad
            slope = -gnorm**2
        alpha = settings.initial_step
        accepted = False
        for _ in range(settings.max_backtracks):
            trial_nodes = current.nodes.copy()
            for j in range(current.agent_count):
                for k in range(2, N - 1):
                    trial_nodes[j, k] = alg.project(alg.compose(
                        current.nodes[j, k], alg.exp(alpha * direction[j, k])))
            trial = current.with_nodes(trial_nodes)
            trial_value = discrete_cost(metric, graph, potentials, trial, bc, geo)
            if trial_value <= value + 1e-4 * alpha * slope:
                current, value = trial, trial_value
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        history.append(value)
        grad, gnorm = cost_gradient(metric, graph, potentials, current,
                                    settings.fd_step, bc, geo)
        if gnorm < best[2]:
            best = (current, value, gnorm)
    if gnorm <= settings.gradient_tolerance:
        return OracleResult(path=current, value=value, gradient_norm=gnorm,
                            iterations=iterations + 1, converged=True,
                            history=np.array(history))
    raise MaxIterationsError(
        f"descent stopped at gradient norm {best[2]:.3e} "
        f"(tolerance {settings.gradient_tolerance:g})",
        best=OracleResult(path=best[0], value=best[1], gradient_norm=best[2],
                          iterations=iterations + 1, converged=False,
                          history=np.array(history)),
    )
