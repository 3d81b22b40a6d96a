import numpy as np
import pytest

from liecubics import (AgentBoundary, AgentJet, BoundaryConditions,
                       DiscretePath, EdgePotentials, Graph,
                       InsufficientSamplesError, IntegratorSettings,
                       InverseShifted, LieAlgebra, MaxIterationsError, Metric,
                       OracleSettings, SystemState, Trajectory, cost_gradient,
                       discrete_cost, evaluate_cost, from_trajectory,
                       hermite_path, integrate_ivp, minimize_discrete_cost,
                       path_gap, perturb_path, unreduced_residual)
from liecubics.dynamics import COVARIANT
from liecubics.potentials import ZERO_POTENTIALS


def cubic_trajectory(step=1e-3):
    alg = LieAlgebra.abelian(1)
    m = Metric(alg, np.eye(1))
    graph = Graph(agent_count=1)
    state = SystemState(0.0, (AgentJet(np.zeros(1), np.zeros(1), np.zeros(1),
                                       np.array([6.0])),))
    traj = integrate_ivp(m, graph, ZERO_POTENTIALS, state, 1.0,
                         IntegratorSettings(step=step))
    return m, graph, traj


def test_cost_of_geodesic_is_zero(bi_metric, so3):
    graph = Graph(agent_count=1)
    state = SystemState(0.0, (AgentJet(so3.identity(), np.array([0.3, 0.1, 0.0]),
                                       np.zeros(3), np.zeros(3)),))
    traj = integrate_ivp(bi_metric, graph, ZERO_POTENTIALS, state, 1.0,
                         IntegratorSettings(step=1e-2))
    assert evaluate_cost(bi_metric, graph, ZERO_POTENTIALS, traj) <= 1e-20


def test_cost_of_euclidean_cubic():
    m, graph, traj = cubic_trajectory()
    assert evaluate_cost(m, graph, ZERO_POTENTIALS, traj) == pytest.approx(6.0, abs=1e-9)


def test_cost_of_static_pair_counts_each_edge_once(bi_metric, so3):
    # two agents holding a constant quarter-turn separation for unit time
    graph = Graph(agent_count=2, edges=frozenset({(0, 1)}))
    pots = EdgePotentials(default=InverseShifted(gain=1.0, shift=1.0))
    n = 100
    times = np.linspace(0.0, 1.0, n + 1)
    poses = np.empty((2, n + 1, 3, 3))
    poses[0] = np.eye(3)
    poses[1] = so3.exp(np.array([0.0, 0.0, np.pi / 2]))
    jets = np.zeros((2, n + 1, 3, 3))
    traj = Trajectory(times=times, poses=poses, jets=jets, chart=COVARIANT)
    expected = 1.0 / (np.pi**2 / 4.0 + 1.0)
    assert evaluate_cost(bi_metric, graph, pots, traj) == pytest.approx(expected,
                                                                        abs=1e-12)


def test_cost_left_translation_invariance(bi_metric, so3):
    rng = np.random.default_rng(0)
    graph = Graph(agent_count=2, edges=frozenset({(0, 1)}))
    pots = EdgePotentials(default=InverseShifted(gain=0.5, shift=0.3))
    jets = tuple(AgentJet(so3.exp(0.4 * rng.normal(size=3)),
                          rng.normal(size=3), rng.normal(size=3),
                          rng.normal(size=3)) for _ in range(2))
    traj = integrate_ivp(bi_metric, graph, pots, SystemState(0.0, jets), 1.0,
                         IntegratorSettings(step=5e-3))
    gamma = so3.exp(rng.normal(size=3))
    shifted = Trajectory(times=traj.times,
                         poses=np.einsum("ab,snbc->snac", gamma, traj.poses),
                         jets=traj.jets, chart=traj.chart)
    a = evaluate_cost(bi_metric, graph, pots, traj)
    b = evaluate_cost(bi_metric, graph, pots, shifted)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_residual_tiny_on_euclidean_cubic():
    m, graph, traj = cubic_trajectory(step=1e-2)
    rep = unreduced_residual(m, graph, ZERO_POTENTIALS, traj, 1e-2)
    assert rep.max_norm <= 1e-8
    assert rep.fd_step == pytest.approx(1e-2)


def test_residual_richardson_order(aniso_metric, so3):
    graph = Graph(agent_count=1)
    rng = np.random.default_rng(1)
    state = SystemState(0.0, (AgentJet(so3.identity(), 0.3 * rng.normal(size=3),
                                       0.3 * rng.normal(size=3),
                                       0.3 * rng.normal(size=3)),))
    traj = integrate_ivp(aniso_metric, graph, ZERO_POTENTIALS, state, 1.0,
                         IntegratorSettings(step=1e-3))
    coarse = unreduced_residual(aniso_metric, graph, ZERO_POTENTIALS, traj, 8e-3)
    fine = unreduced_residual(aniso_metric, graph, ZERO_POTENTIALS, traj, 4e-3)
    assert coarse.max_norm / fine.max_norm == pytest.approx(4.0, abs=0.5)


def test_residual_detects_corruption(bi_metric, so3):
    graph = Graph(agent_count=1)
    state = SystemState(0.0, (AgentJet(so3.identity(), np.array([0.2, 0.1, 0.0]),
                                       np.array([0.0, 0.3, 0.1]),
                                       np.zeros(3)),))
    traj = integrate_ivp(bi_metric, graph, ZERO_POTENTIALS, state, 1.0,
                         IntegratorSettings(step=2e-3))
    clean = unreduced_residual(bi_metric, graph, ZERO_POTENTIALS, traj, 8e-3)
    poses = traj.poses.copy()
    for k, t in enumerate(traj.times):
        wobble = so3.exp(1e-2 * np.sin(2 * np.pi * t) * np.array([1.0, 0.0, 0.0]))
        poses[0, k] = poses[0, k] @ wobble
    bad = Trajectory(times=traj.times, poses=poses, jets=traj.jets,
                     chart=traj.chart)
    rep = unreduced_residual(bi_metric, graph, ZERO_POTENTIALS, bad, 8e-3)
    assert rep.max_norm >= 1e-3
    assert rep.max_norm > 50.0 * clean.max_norm


def test_residual_grid_guards():
    m, graph, traj = cubic_trajectory(step=1e-2)
    with pytest.raises(InsufficientSamplesError):
        unreduced_residual(m, graph, ZERO_POTENTIALS, traj, 1e-3)
    short = Trajectory(times=traj.times[:8], poses=traj.poses[:, :8],
                       jets=traj.jets[:, :8], chart=traj.chart)
    with pytest.raises(InsufficientSamplesError):
        unreduced_residual(m, graph, ZERO_POTENTIALS, short, 1e-2)


def test_discrete_cost_on_cubic_samples():
    alg = LieAlgebra.abelian(1)
    m = Metric(alg, np.eye(1))
    graph = Graph(agent_count=1)
    t = np.linspace(0.0, 1.0, 201)
    path = DiscretePath(times=t, nodes=(t**3)[None, :, None])
    val = discrete_cost(m, graph, ZERO_POTENTIALS, path)
    assert val == pytest.approx(6.0, abs=0.01)
    bc = BoundaryConditions(agents=(AgentBoundary(
        np.zeros(1), np.ones(1), np.zeros(1), np.array([3.0])),))
    val_bc = discrete_cost(m, graph, ZERO_POTENTIALS, path, bc)
    assert val_bc == pytest.approx(6.0, abs=0.01)


def test_discrete_cost_of_sampled_geodesic_is_small(bi_metric, so3):
    graph = Graph(agent_count=1)
    v = np.array([0.4, -0.1, 0.2])
    t = np.linspace(0.0, 1.0, 101)
    nodes = np.stack([so3.exp(tk * v) for tk in t])[None]
    path = DiscretePath(times=t, nodes=nodes)
    assert discrete_cost(bi_metric, graph, ZERO_POTENTIALS, path) <= 1e-4


def test_discrete_cost_matches_smooth_cost(bi_metric, so3):
    graph = Graph(agent_count=1)
    rng = np.random.default_rng(2)
    state = SystemState(0.0, (AgentJet(so3.identity(), 0.4 * rng.normal(size=3),
                                       0.4 * rng.normal(size=3),
                                       0.4 * rng.normal(size=3)),))
    traj = integrate_ivp(bi_metric, graph, ZERO_POTENTIALS, state, 1.0,
                         IntegratorSettings(step=1e-3))
    smooth = evaluate_cost(bi_metric, graph, ZERO_POTENTIALS, traj)
    vals = []
    for segments in (100, 200):
        path = from_trajectory(traj, segments)
        vals.append(discrete_cost(bi_metric, graph, ZERO_POTENTIALS, path))
    # halving the step shrinks the defect by about four
    e1, e2 = abs(vals[0] - smooth), abs(vals[1] - smooth)
    assert e2 <= e1 / 2.5
    assert e2 <= 1e-3 * max(1.0, smooth)


def test_from_trajectory_requires_divisible_grid():
    m, graph, traj = cubic_trajectory(step=1e-2)
    with pytest.raises(ValueError, match="divide"):
        from_trajectory(traj, 33)


def test_cost_gradient_matches_full_differences(bi_metric, so3):
    graph = Graph(agent_count=2, edges=frozenset({(0, 1)}))
    pots = EdgePotentials(default=InverseShifted(gain=0.5, shift=0.5))
    rz = lambda a: so3.exp(np.array([0.0, 0.0, a]))
    bc = BoundaryConditions(agents=(
        AgentBoundary(so3.identity(), rz(0.8), np.zeros(3), np.zeros(3)),
        AgentBoundary(rz(0.8), so3.identity(), np.zeros(3), np.zeros(3)),
    ))
    path = perturb_path(hermite_path(bi_metric, bc, 12), 0.05, 7, bi_metric)
    grad, _ = cost_gradient(bi_metric, graph, pots, path, bc=bc)
    rng = np.random.default_rng(3)
    for _ in range(6):
        j = rng.integers(0, 2)
        k = rng.integers(2, path.segments - 1)
        d = rng.integers(0, 3)
        u = 1e-6
        e = np.zeros(3)
        e[d] = u
        plus = path.nodes.copy()
        plus[j, k] = so3.compose(path.nodes[j, k], so3.exp(e))
        minus = path.nodes.copy()
        minus[j, k] = so3.compose(path.nodes[j, k], so3.exp(-e))
        brute = (discrete_cost(bi_metric, graph, pots, path.with_nodes(plus), bc)
                 - discrete_cost(bi_metric, graph, pots, path.with_nodes(minus),
                                 bc)) / (2.0 * u)
        assert grad[j, k, d] == pytest.approx(brute, rel=1e-4, abs=1e-7)


def test_oracle_on_hermite_problem():
    alg = LieAlgebra.abelian(1)
    m = Metric(alg, np.eye(1))
    graph = Graph(agent_count=1)
    bc = BoundaryConditions(agents=(AgentBoundary(
        np.zeros(1), np.ones(1), np.zeros(1), np.zeros(1)),))
    exact = hermite_path(m, bc, 100)  # samples of the closed-form cubic
    _, gnorm = cost_gradient(m, graph, ZERO_POTENTIALS, exact, bc=bc)
    assert gnorm <= 1e-3
    start = perturb_path(exact, 1e-2, 11, m)
    result = minimize_discrete_cost(m, graph, ZERO_POTENTIALS, bc, start,
                                    OracleSettings(gradient_tolerance=1e-5,
                                                   max_iterations=120))
    assert result.converged
    # descent is monotone by construction of the backtracking rule
    assert (np.diff(result.history) <= 1e-12).all()
    t = exact.times
    closed = (3 * t**2 - 2 * t**3)[None, :, None]
    assert np.abs(result.path.nodes - closed).max() <= 1e-4


def test_oracle_stationary_at_trivial_minimum(bi_metric, so3):
    graph = Graph(agent_count=1)
    bc = BoundaryConditions(agents=(AgentBoundary(
        so3.identity(), so3.identity(), np.zeros(3), np.zeros(3)),))
    path = hermite_path(bi_metric, bc, 20)
    result = minimize_discrete_cost(bi_metric, graph, ZERO_POTENTIALS, bc, path,
                                    OracleSettings(gradient_tolerance=1e-8))
    assert result.value <= 1e-16
    assert result.iterations == 0


def test_oracle_budget_exhaustion_carries_best():
    alg = LieAlgebra.abelian(1)
    m = Metric(alg, np.eye(1))
    graph = Graph(agent_count=1)
    bc = BoundaryConditions(agents=(AgentBoundary(
        np.zeros(1), np.ones(1), np.zeros(1), np.zeros(1)),))
    start = perturb_path(hermite_path(m, bc, 60), 1e-2, 4, m)
    with pytest.raises(MaxIterationsError) as info:
        minimize_discrete_cost(m, graph, ZERO_POTENTIALS, bc, start,
                               OracleSettings(gradient_tolerance=1e-14,
                                              max_iterations=2))
    assert info.value.best is not None
    assert info.value.best.value <= discrete_cost(m, graph, ZERO_POTENTIALS,
                                                  start, bc) + 1e-12


def test_gradient_norm_decays_with_refinement(bi_metric, so3):
    from liecubics import solve_bvp

    bc = BoundaryConditions(agents=(AgentBoundary(
        so3.identity(), so3.exp(np.array([0.5, -0.3, 0.4])),
        np.zeros(3), np.zeros(3)),))
    res = solve_bvp(bi_metric, Graph(agent_count=1), ZERO_POTENTIALS, bc,
                    integrator=IntegratorSettings(step=2.5e-3))
    norms = {}
    for segments in (50, 100, 200):
        path = from_trajectory(res.trajectory, segments)
        _, norms[segments] = cost_gradient(bi_metric, Graph(agent_count=1),
                                           ZERO_POTENTIALS, path, bc=bc)
    # bounded by C/N at the discretized solution; report the constant
    constant = max(n * g for n, g in norms.items())
    print(f"gradient-decay constant C = {constant:.3e} "
          f"(norms {[f'{g:.2e}' for g in norms.values()]})")
    for segments, g in norms.items():
        assert g <= 0.2 / segments


def test_perturb_keeps_pinned_nodes(bi_metric, so3):
    bc = BoundaryConditions(agents=(AgentBoundary(
        so3.identity(), so3.exp(np.array([0.2, 0.0, 0.1])),
        np.zeros(3), np.zeros(3)),))
    path = hermite_path(bi_metric, bc, 16)
    shaken = perturb_path(path, 0.05, 9, bi_metric)
    for k in (0, 1, path.segments - 1, path.segments):
        assert np.allclose(shaken.nodes[0, k], path.nodes[0, k])
    assert path_gap(bi_metric, shaken, path) > 0.0


def test_init_mismatch_is_rejected(bi_metric, so3):
    bc = BoundaryConditions(agents=(AgentBoundary(
        so3.identity(), so3.exp(np.array([0.2, 0.0, 0.1])),
        np.zeros(3), np.zeros(3)),))
    path = hermite_path(bi_metric, bc, 16)
    nodes = path.nodes.copy()
    nodes[0, 0] = so3.exp(np.array([0.3, 0.0, 0.0]))
    with pytest.raises(ValueError, match="boundary node"):
        minimize_discrete_cost(bi_metric, Graph(agent_count=1),
                               ZERO_POTENTIALS, bc, path.with_nodes(nodes))
