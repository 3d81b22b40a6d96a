import numpy as np
import pytest

from liecubics import (AgentJet, BI_INVARIANT, BiInvariantRequiredError,
                       COVARIANT, DERIVATIVE, EdgePotentials, Graph,
                       IntegratorSettings, InverseShifted, LieAlgebra, Metric,
                       NonFiniteStateError, SystemState, convert_jets,
                       cubic_first_integral, integrate_ivp,
                       jet_rates_bi_invariant, jet_rates_left_invariant,
                       trajectory_to_chart)
from liecubics.dynamics import INTEGRATE_ODE
from liecubics.potentials import ZERO_POTENTIALS

E = np.eye(3)


def single(alg, xi0, xi1, xi2, g=None):
    g = alg.identity() if g is None else g
    return SystemState(0.0, (AgentJet(g, np.asarray(xi0, float),
                                      np.asarray(xi1, float),
                                      np.asarray(xi2, float)),))


def test_left_rates_abelian_are_plain_chains(abelian2):
    m = Metric(abelian2, np.eye(2))
    graph = Graph(agent_count=1)
    state = single(abelian2, [1.0, 2.0], [3.0, 4.0], [5.0, 6.0])
    (d0, d1, d2), = jet_rates_left_invariant(m, graph, ZERO_POTENTIALS, state)
    assert np.allclose(d0, [3.0, 4.0])
    assert np.allclose(d1, [5.0, 6.0])
    assert np.allclose(d2, 0.0)


def test_left_rates_geodesic_jet_is_stationary(bi_metric, so3):
    graph = Graph(agent_count=1)
    state = single(so3, [0.3, -0.2, 0.5], np.zeros(3), np.zeros(3))
    (d0, d1, d2), = jet_rates_left_invariant(bi_metric, graph, ZERO_POTENTIALS,
                                             state)
    assert np.allclose(d0, 0.0, atol=1e-14)
    assert np.allclose(d1, 0.0, atol=1e-14)
    assert np.allclose(d2, 0.0, atol=1e-14)


def test_left_rates_bi_invariant_example(bi_metric, so3):
    # expansion oracle with the half-bracket connection
    def conn(a, b):
        return 0.5 * so3.bracket(a, b)

    def curv(x, y, z):
        return (conn(x, conn(y, z)) - conn(y, conn(x, z))
                - conn(so3.bracket(x, y), z))

    graph = Graph(agent_count=1)
    state = single(so3, E[0], E[1], np.zeros(3))
    (d0, d1, d2), = jet_rates_left_invariant(bi_metric, graph, ZERO_POTENTIALS,
                                             state)
    assert np.allclose(d0, E[1], atol=1e-14)
    assert np.allclose(d1, -0.5 * E[2], atol=1e-14)
    assert np.allclose(d2, -curv(E[1], E[0], E[0]), atol=1e-14)
    assert np.allclose(d2, -0.25 * E[1], atol=1e-14)


def test_derivative_rates_examples(bi_metric, so3):
    graph = Graph(agent_count=1)
    state = single(so3, [0.4, 0.0, 0.0], [0.1, 0.2, 0.3], np.zeros(3))
    (d0, d1, d2), = jet_rates_bi_invariant(bi_metric, graph, ZERO_POTENTIALS,
                                           state)
    assert np.allclose(d0, state.jets[0].xi1)
    assert np.allclose(d1, 0.0)
    assert np.allclose(d2, 0.0)
    state = single(so3, E[0], np.zeros(3), E[1])
    (_, _, d2), = jet_rates_bi_invariant(bi_metric, graph, ZERO_POTENTIALS,
                                         state)
    assert np.allclose(d2, -E[2], atol=1e-14)


def test_derivative_rates_require_flag(aniso_metric, so3):
    graph = Graph(agent_count=1)
    state = single(so3, E[0], E[1], E[2])
    with pytest.raises(BiInvariantRequiredError):
        jet_rates_bi_invariant(aniso_metric, graph, ZERO_POTENTIALS, state)


def test_convert_jets_round_trip(bi_metric, abelian2, so3):
    zero = AgentJet(so3.identity(), np.zeros(3), np.zeros(3), np.zeros(3))
    out = convert_jets(bi_metric, zero, to=DERIVATIVE)
    assert np.allclose(out.xi2, 0.0)
    m2 = Metric(abelian2, np.eye(2), bi_invariant=True)
    jet2 = AgentJet(np.zeros(2), np.ones(2), np.ones(2), np.ones(2))
    same = convert_jets(m2, jet2, to=DERIVATIVE)
    assert np.allclose(same.xi2, jet2.xi2)
    rng = np.random.default_rng(0)
    for _ in range(100):
        jet = AgentJet(so3.identity(), rng.normal(size=3), rng.normal(size=3),
                       rng.normal(size=3))
        back = convert_jets(bi_metric, convert_jets(bi_metric, jet, DERIVATIVE),
                            COVARIANT)
        assert np.abs(back.xi2 - jet.xi2).max() <= 1e-14


def test_integrate_euclidean_cubic():
    alg = LieAlgebra.abelian(1)
    m = Metric(alg, np.eye(1))
    graph = Graph(agent_count=1)
    state = SystemState(0.0, (AgentJet(np.zeros(1), np.zeros(1), np.zeros(1),
                                       np.array([6.0])),))
    traj = integrate_ivp(m, graph, ZERO_POTENTIALS, state, 1.0,
                         IntegratorSettings(step=1e-3))
    assert np.allclose(traj.poses[0, :, 0], traj.times**3, atol=1e-12)


def test_integrate_geodesic_persists(bi_metric, so3):
    v = np.array([0.4, -0.2, 0.7])
    graph = Graph(agent_count=1)
    state = single(so3, v, np.zeros(3), np.zeros(3))
    traj = integrate_ivp(bi_metric, graph, ZERO_POTENTIALS, state, 1.0,
                         IntegratorSettings(step=1e-3))
    assert np.abs(traj.jets[0, :, 0] - v).max() <= 1e-12
    assert np.abs(traj.poses[0, -1] - so3.exp(v)).max() <= 1e-8


def test_integrator_fourth_order(aniso_metric, so3):
    rng = np.random.default_rng(1)
    graph = Graph(agent_count=1)
    state = single(so3, rng.normal(size=3), rng.normal(size=3),
                   rng.normal(size=3))

    def end(h):
        tr = integrate_ivp(aniso_metric, graph, ZERO_POTENTIALS, state, 0.5,
                           IntegratorSettings(step=h))
        return tr.poses[0, -1], tr.jets[0, -1]

    p1, j1 = end(0.02)
    p2, j2 = end(0.01)
    p3, j3 = end(0.005)
    e1 = np.linalg.norm(so3.log(p1.T @ p2)) + np.linalg.norm(j1 - j2)
    e2 = np.linalg.norm(so3.log(p2.T @ p3)) + np.linalg.norm(j2 - j3)
    assert 16.0 * 0.75 <= e1 / e2 <= 16.0 * 1.25


def test_first_integral_constant(bi_metric, so3):
    rng = np.random.default_rng(2)
    graph = Graph(agent_count=1)
    state = single(so3, rng.normal(size=3), rng.normal(size=3),
                   rng.normal(size=3))
    traj = integrate_ivp(bi_metric, graph, ZERO_POTENTIALS, state, 1.0,
                         IntegratorSettings(step=1e-3))
    I = cubic_first_integral(bi_metric, traj)
    assert I.max() - I.min() <= 1e-6


def test_cross_formulation_agreement(bi_metric, so3):
    rng = np.random.default_rng(3)
    graph = Graph(agent_count=1)
    jet = AgentJet(so3.identity(), rng.normal(size=3), rng.normal(size=3),
                   rng.normal(size=3))
    traj_l = integrate_ivp(bi_metric, graph, ZERO_POTENTIALS,
                           SystemState(0.0, (jet,)), 1.0,
                           IntegratorSettings(step=1e-3))
    jet_d = convert_jets(bi_metric, jet, to=DERIVATIVE)
    traj_b = integrate_ivp(bi_metric, graph, ZERO_POTENTIALS,
                           SystemState(0.0, (jet_d,)), 1.0,
                           IntegratorSettings(step=1e-3),
                           formulation=BI_INVARIANT)
    back = trajectory_to_chart(bi_metric, traj_b, COVARIANT)
    assert np.abs(back.poses - traj_l.poses).max() <= 1e-8
    assert np.abs(back.jets - traj_l.jets).max() <= 1e-8


def two_agent_setup(so3):
    bi = Metric(so3, np.eye(3), bi_invariant=True)
    graph = Graph(agent_count=2, edges=frozenset({(0, 1)}))
    pots = EdgePotentials(default=InverseShifted(gain=0.3, shift=0.2))
    rng = np.random.default_rng(4)
    jets = tuple(
        AgentJet(so3.exp(0.5 * rng.normal(size=3)), 0.5 * rng.normal(size=3),
                 0.5 * rng.normal(size=3), 0.5 * rng.normal(size=3))
        for _ in range(2))
    return bi, graph, pots, SystemState(0.0, jets)


def test_relative_pose_policies_agree(so3):
    bi, graph, pots, state = two_agent_setup(so3)
    rec = integrate_ivp(bi, graph, pots, state, 1.0,
                        IntegratorSettings(step=1e-3))
    ode = integrate_ivp(bi, graph, pots, state, 1.0,
                        IntegratorSettings(step=1e-3, hjk_policy=INTEGRATE_ODE))
    assert ode.hjk_drift is not None and ode.hjk_drift <= 1e-6
    assert np.abs(ode.poses - rec.poses).max() <= 1e-8
    assert rec.hjk_drift is None


def test_reduced_flow_left_invariance(so3):
    bi, graph, pots, state = two_agent_setup(so3)
    base = integrate_ivp(bi, graph, pots, state, 1.0,
                         IntegratorSettings(step=1e-3))
    gamma = so3.exp(np.array([0.9, -0.4, 0.2]))
    shifted_jets = tuple(
        AgentJet(so3.compose(gamma, j.g), j.xi0, j.xi1, j.xi2)
        for j in state.jets)
    shifted = integrate_ivp(bi, graph, pots, SystemState(0.0, shifted_jets),
                            1.0, IntegratorSettings(step=1e-3))
    assert np.abs(shifted.jets - base.jets).max() <= 1e-8
    for k in (0, 500, 1000):
        h_base = base.poses[0, k].T @ base.poses[1, k]
        h_shift = shifted.poses[0, k].T @ shifted.poses[1, k]
        assert np.abs(h_base - h_shift).max() <= 1e-8


def test_non_finite_states_are_rejected(abelian2):
    m = Metric(abelian2, np.eye(2))
    graph = Graph(agent_count=2, edges=frozenset({(0, 1)}))
    pots = EdgePotentials(default=InverseShifted(gain=1e308, shift=1e-9))
    jets = (AgentJet(np.zeros(2), np.array([1.0, 0.0]), np.zeros(2), np.zeros(2)),
            AgentJet(np.array([1e-8, 0.0]), np.array([-1.0, 0.0]), np.zeros(2),
                     np.zeros(2)))
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NonFiniteStateError):
            integrate_ivp(m, graph, pots, SystemState(0.0, jets), 1.0,
                          IntegratorSettings(step=0.1))


def test_trajectory_accessors(bi_metric, so3):
    graph = Graph(agent_count=1)
    state = single(so3, E[0], E[1], E[2])
    traj = integrate_ivp(bi_metric, graph, ZERO_POTENTIALS, state, 0.1,
                         IntegratorSettings(step=0.01))
    assert traj.node_count == 11
    assert traj.agent_count == 1
    assert traj.step == pytest.approx(0.01)
    jet = traj.agent_jet(0, 0)
    assert np.allclose(jet.xi0, E[0])
    st = traj.system_state(10)
    assert st.t == pytest.approx(0.1)
