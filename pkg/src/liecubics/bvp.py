"""Two-point boundary-value solver for the reduced multi-agent system.

Endpoint poses and body velocities are prescribed for every agent; the
unknowns are each agent's initial higher jets (xi1, xi2).  A damped
Gauss-Newton iteration (Levenberg style, forward-difference Jacobian) drives
the terminal mismatch to zero.  The terminal pose error is measured through
the group logarithm in the body frame, which keeps the residual chart-free
and left-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algebra import AlgebraVector, GroupElement
from .dynamics import (AgentJet, DERIVATIVE, IntegratorSettings,
                       LEFT_INVARIANT, SystemState, Trajectory, convert_jets,
                       cubic_first_integral, integrate_ivp)
from .errors import (CutLocusError, NoConvergenceError, NonFiniteStateError)
from .geodesics import GeodesicSettings
from .geometry import Metric
from .potentials import EdgePotentials, Graph, eval_potential

_TRAPZ = np.trapezoid if hasattr(np, "trapezoid") else np.trapz


@dataclass(frozen=True)
class AgentBoundary:
    """Endpoint data for one agent: poses and body-frame velocities."""

    g_start: GroupElement
    g_end: GroupElement
    v_start: AlgebraVector
    v_end: AlgebraVector


@dataclass(frozen=True)
class BoundaryConditions:
    agents: tuple
    t_start: float = 0.0
    t_end: float = 1.0

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        object.__setattr__(self, "agents", tuple(self.agents))

    @property
    def agent_count(self) -> int:
        return len(self.agents)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class ShootingSettings:
    tolerance: float = 1e-9
    max_iterations: int = 100
    damping: float = 1e-3
    fd_step: float = 1e-6
    multistart: int = 1
    noise_scale: float = 0.5

    def __post_init__(self):
        for name in ("tolerance", "max_iterations", "damping", "fd_step",
                     "multistart"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SolveResult:
    trajectory: Trajectory
    unknowns: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    cost: float
    start_index: int
    first_integral_drift: Optional[float] = None
    first_integral_drift_per_agent: Optional[tuple] = None

    def report(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual_norm": float(self.residual_norm),
            "cost": float(self.cost),
            "start_index": int(self.start_index),
            "first_integral_drift": (None if self.first_integral_drift is None
                                     else float(self.first_integral_drift)),
            "first_integral_drift_per_agent": (
                None if self.first_integral_drift_per_agent is None
                else [float(v) for v in self.first_integral_drift_per_agent]),
            "hjk_drift": (None if self.trajectory.hjk_drift is None
                          else float(self.trajectory.hjk_drift)),
        }


def hermite_seed(metric: Metric, bc: BoundaryConditions) -> np.ndarray:
    """Initial (xi1, xi2) guess per agent from algebra-chart Hermite jets.

    Exact for abelian groups with zero potential; a good basin seed for
    moderate rotations otherwise.
    """
    alg = metric.algebra
    T = bc.duration
    out = np.zeros((bc.agent_count, 2, alg.dim))
    for j, ab in enumerate(bc.agents):
        u = alg.log(alg.compose(alg.inverse(ab.g_start), ab.g_end))
        va = np.asarray(ab.v_start, dtype=float)
        vb = np.asarray(ab.v_end, dtype=float)
        a2 = 3.0 * u / T**2 - (2.0 * va + vb) / T
        a3 = -2.0 * u / T**3 + (va + vb) / T**2
        out[j, 0] = 2.0 * a2
        out[j, 1] = 6.0 * a3
    return out


def initial_state(metric: Metric, bc: BoundaryConditions, unknowns,
                  formulation: str = LEFT_INVARIANT) -> SystemState:
    """Assemble the IVP start state; unknowns are covariant-chart jets."""
    unknowns = np.asarray(unknowns, dtype=float)
    jets = []
    for j, ab in enumerate(bc.agents):
        jet = AgentJet(
            g=np.asarray(ab.g_start, dtype=float),
            xi0=np.asarray(ab.v_start, dtype=float),
            xi1=unknowns[j, 0].copy(),
            xi2=unknowns[j, 1].copy(),
        )
        if formulation != LEFT_INVARIANT:
            jet = convert_jets(metric, jet, to=DERIVATIVE)
        jets.append(jet)
    return SystemState(t=bc.t_start, jets=tuple(jets))


def shooting_residual(metric: Metric, graph: Graph, potentials: EdgePotentials,
                      bc: BoundaryConditions, unknowns,
                      integrator: IntegratorSettings = IntegratorSettings(),
                      formulation: str = LEFT_INVARIANT,
                      geo_settings: GeodesicSettings = GeodesicSettings(),
                      grad_method: str = "log"):
    """Terminal mismatch of the IVP launched from the given unknowns.

    Returns (residual, trajectory); the residual concatenates, per agent,
    the body-frame log of the terminal pose error and the terminal velocity
    gap, so it vanishes exactly when all boundary conditions are met.
    """
    unknowns = np.asarray(unknowns, dtype=float)
    if unknowns.shape != (bc.agent_count, 2, metric.algebra.dim):
        raise ValueError("unknowns must have shape (agents, 2, dim)")
    state0 = initial_state(metric, bc, unknowns, formulation)
    traj = integrate_ivp(metric, graph, potentials, state0, bc.duration,
                         integrator, formulation, geo_settings, grad_method)
    alg = metric.algebra
    res = np.zeros((bc.agent_count, 2, alg.dim))
    last = traj.node_count - 1
    for j, ab in enumerate(bc.agents):
        g_T = traj.poses[j, last]
        res[j, 0] = alg.log(alg.compose(alg.inverse(g_T),
                                        np.asarray(ab.g_end, dtype=float)))
        res[j, 1] = traj.jets[j, last, 0] - np.asarray(ab.v_end, dtype=float)
    return res.ravel(), traj


def _trajectory_cost(metric, graph, potentials, traj):
    """Trapezoid estimate of the action, used only to rank multistart hits."""
    M = metric.matrix
    acc = np.einsum("snd,de,sne->sn", traj.jets[:, :, 1], M, traj.jets[:, :, 1])
    total = 0.5 * _TRAPZ(acc.sum(axis=0), traj.times)
    if not potentials.is_zero(graph):
        pot = np.zeros(traj.node_count)
        for (a, b) in graph.sorted_edges:
            p = potentials.for_edge(a, b)
            for k in range(traj.node_count):
                h = metric.algebra.compose(
                    metric.algebra.inverse(traj.poses[a, k]), traj.poses[b, k])
                pot[k] += eval_potential(p, metric, h)
        total += _TRAPZ(pot, traj.times)
    return float(total)


def _levenberg(residual_fn, x0, settings):
    """Damped Gauss-Newton on a flattened unknown vector.

    residual_fn returns None for trial points whose integration failed;
    those are treated as rejected steps.
    """
    x = x0.copy()
    r = residual_fn(x)
    if r is None:
        raise NoConvergenceError("residual undefined at the initial guess",
                                 best=x0, residual_norm=np.inf)
    lam = settings.damping
    rnorm = float(np.linalg.norm(r))
    best_x, best_norm = x.copy(), rnorm
    n_iter = 0
    for n_iter in range(settings.max_iterations):
        if rnorm <= settings.tolerance:
            return x, rnorm, n_iter, True
        J = np.empty((r.size, x.size))
        ok = True
        for i in range(x.size):
            dx = np.zeros(x.size)
            dx[i] = settings.fd_step
            ri = residual_fn(x + dx)
            if ri is None:
                ri = residual_fn(x - dx)
                if ri is None:
                    ok = False
                    break
                J[:, i] = (r - ri) / settings.fd_step
            else:
                J[:, i] = (ri - r) / settings.fd_step
        if not ok:
            break
        JtJ = J.T @ J
        Jtr = J.T @ r
        accepted = False
        for _ in range(12):
            try:
                delta = np.linalg.solve(JtJ + lam * np.eye(x.size), -Jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_try = residual_fn(x + delta)
            if r_try is not None and np.linalg.norm(r_try) < rnorm:
                x = x + delta
                r = r_try
                rnorm = float(np.linalg.norm(r))
                lam = max(lam * 0.3, 1e-14)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        if rnorm < best_norm:
            best_x, best_norm = x.copy(), rnorm
    converged = rnorm <= settings.tolerance
    if converged:
        return x, rnorm, n_iter + 1, True
    return best_x, best_norm, n_iter + 1, False


def solve_bvp(metric: Metric, graph: Graph, potentials: EdgePotentials,
              bc: BoundaryConditions,
              shooting: ShootingSettings = ShootingSettings(),
              integrator: IntegratorSettings = IntegratorSettings(),
              formulation: str = LEFT_INVARIANT,
              geo_settings: GeodesicSettings = GeodesicSettings(),
              grad_method: str = "log",
              seed: int = 0) -> SolveResult:
    """Solve the boundary-value problem; returns the best converged start.

    Multistart perturbs the Hermite seed with scaled Gaussian noise; among
    converged starts the one with the smallest action is returned, since the
    necessary conditions admit multiple critical points.  Raises
    NoConvergenceError (with the best attempt attached) if no start meets
    the tolerance.
    """
    if graph.agent_count != bc.agent_count:
        raise ValueError("boundary conditions do not match the graph size")
    dim = metric.algebra.dim
    shape = (bc.agent_count, 2, dim)
    seed_guess = hermite_seed(metric, bc).ravel()
    rng = np.random.default_rng(seed)
    last_traj = {}

    def residual_fn(xflat):
        try:
            r, traj = shooting_residual(metric, graph, potentials, bc,
                                        xflat.reshape(shape), integrator,
                                        formulation, geo_settings, grad_method)
        except (CutLocusError, NonFiniteStateError, NoConvergenceError,
                FloatingPointError, OverflowError):
            return None
        last_traj["traj"] = traj
        last_traj["x"] = xflat.copy()
        return r

    attempts = []
    scale = shooting.noise_scale * (1.0 + float(np.sqrt(np.mean(seed_guess**2))))
    for start in range(shooting.multistart):
        x0 = seed_guess.copy()
        if start > 0:
            x0 = x0 + scale * rng.normal(size=x0.shape)
        try:
            x, rnorm, iters, ok = _levenberg(residual_fn, x0, shooting)
        except NoConvergenceError:
            continue
        r_final = residual_fn(x)
        if r_final is None:
            continue
        traj = last_traj["traj"]
        cost = _trajectory_cost(metric, graph, potentials, traj)
        drift = per_agent = None
        if potentials.is_zero(graph):
            I = cubic_first_integral(metric, traj)
            spans = I.max(axis=1) - I.min(axis=1)
            drift = float(spans.max())
            per_agent = tuple(float(v) for v in spans)
        attempts.append(SolveResult(
            trajectory=traj, unknowns=x.reshape(shape),
            residual_norm=float(np.linalg.norm(r_final)), iterations=iters,
            converged=ok, cost=cost, start_index=start,
            first_integral_drift=drift,
            first_integral_drift_per_agent=per_agent,
        ))
    converged = [a for a in attempts if a.converged]
    if converged:
        return min(converged, key=lambda a: a.cost)
    if attempts:
        best = min(attempts, key=lambda a: a.residual_norm)
        raise NoConvergenceError(
            f"shooting failed to converge; best residual {best.residual_norm:.3e}",
            best=best, residual_norm=best.residual_norm,
        )
    raise NoConvergenceError("all shooting starts failed to evaluate",
                             best=None, residual_norm=np.inf)
