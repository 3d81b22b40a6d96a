import numpy as np
import pytest

from liecubics import CutLocusError, LieAlgebra
from liecubics.algebra import so3_exp, so3_exp_batch, so3_log, so3_log_batch

E = np.eye(3)


def test_so3_bracket_is_cross_product(so3):
    assert np.allclose(so3.bracket(E[0], E[1]), E[2])
    assert np.allclose(so3.bracket(E[1], E[2]), E[0])
    rng = np.random.default_rng(0)
    for _ in range(25):
        x, y = rng.normal(size=3), rng.normal(size=3)
        assert np.allclose(so3.bracket(x, y), np.cross(x, y), atol=1e-14)


def test_bracket_antisymmetry(so3):
    rng = np.random.default_rng(1)
    x = rng.normal(size=3)
    assert np.allclose(so3.bracket(x, x), 0.0, atol=1e-15)


def test_abelian_bracket_vanishes(abelian2):
    assert np.allclose(abelian2.bracket([1.0, 2.0], [3.0, 4.0]), 0.0)


def test_structure_constant_validation_rejects_bad_input():
    c = np.zeros((3, 3, 3))
    c[0, 0, 1] = 1.0  # not antisymmetric: c[0,1,0] stays 0
    with pytest.raises(ValueError, match="antisymmetric"):
        LieAlgebra.from_structure_constants(c)
    rng = np.random.default_rng(3)
    c = rng.normal(size=(3, 3, 3))
    c = 0.5 * (c - c.transpose(0, 2, 1))  # antisymmetric but random
    with pytest.raises(ValueError, match="Jacobi"):
        LieAlgebra.from_structure_constants(c)


def test_stored_constants_satisfy_jacobi(so3):
    c = so3.structure_constants
    rng = np.random.default_rng(4)
    for _ in range(200):
        x, y, z = rng.normal(size=(3, 3))
        total = (so3.bracket(so3.bracket(x, y), z)
                 + so3.bracket(so3.bracket(y, z), x)
                 + so3.bracket(so3.bracket(z, x), y))
        assert np.abs(total).max() <= 1e-12 * max(1.0, np.abs(c).max())


def test_exp_at_zero_is_identity(so3, abelian2):
    assert np.allclose(so3.exp(np.zeros(3)), np.eye(3))
    assert np.allclose(abelian2.exp(np.zeros(2)), np.zeros(2))


def test_exp_quarter_turn(so3):
    R = so3.exp(np.array([0.0, 0.0, np.pi / 2]))
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(R, expected, atol=1e-14)


def test_abelian_exp_is_identity_map(abelian2):
    alg = LieAlgebra.abelian(3)
    assert np.allclose(alg.exp([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_log_of_identity(so3):
    assert np.allclose(so3.log(np.eye(3)), 0.0)


def test_exp_log_round_trip(so3):
    rng = np.random.default_rng(5)
    for _ in range(200):
        v = rng.normal(size=3)
        v *= rng.uniform(0.0, np.pi - 0.01) / np.linalg.norm(v)
        err = np.linalg.norm(so3.log(so3.exp(v)) - v)
        assert err <= 1e-10


def test_log_near_pi_branch(so3):
    rng = np.random.default_rng(6)
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        v = (np.pi - 1e-4) * axis
        assert np.linalg.norm(so3.log(so3.exp(v)) - v) <= 1e-9


def test_log_at_cut_locus_raises(so3):
    R = so3.exp(np.array([np.pi, 0.0, 0.0]))
    with pytest.raises(CutLocusError):
        so3.log(R)


def test_compose_identity_and_inverse(so3, abelian2):
    rng = np.random.default_rng(7)
    g = so3.exp(rng.normal(size=3))
    assert np.allclose(so3.compose(so3.identity(), g), g)
    assert np.abs(so3.compose(g, so3.inverse(g)) - np.eye(3)).max() <= 1e-12
    assert np.allclose(abelian2.compose([1.0, 0.0], [0.0, 2.0]), [1.0, 2.0])


def test_compose_z_rotations(so3):
    q = so3.exp(np.array([0.0, 0.0, np.pi / 4]))
    assert np.allclose(so3.compose(q, q), so3.exp(np.array([0.0, 0.0, np.pi / 2])),
                       atol=1e-14)


def test_adjoint_identity_and_abelian(so3, abelian2):
    rng = np.random.default_rng(8)
    x = rng.normal(size=3)
    assert np.allclose(so3.adjoint(so3.identity(), x), x)
    assert np.allclose(abelian2.adjoint(np.array([3.0, 1.0]), [1.0, 2.0]),
                       [1.0, 2.0])


def test_adjoint_matches_matrix_conjugation(so3):
    # independent oracle: Ad_R x = vee(R hat(x) R^T)
    R = so3.exp(np.array([0.0, 0.0, np.pi / 2]))
    got = so3.adjoint(R, E[0])
    oracle = so3.vee(R @ so3.hat(E[0]) @ R.T)
    assert np.allclose(got, oracle, atol=1e-14)
    assert np.allclose(got, E[1], atol=1e-14)
    rng = np.random.default_rng(9)
    for _ in range(30):
        R = so3.exp(rng.normal(size=3))
        x = rng.normal(size=3)
        assert np.allclose(so3.adjoint(R, x), so3.vee(R @ so3.hat(x) @ R.T),
                           atol=1e-12)


def test_adjoint_is_bracket_homomorphism(so3):
    rng = np.random.default_rng(10)
    for _ in range(100):
        g = so3.exp(rng.normal(size=3))
        x, y = rng.normal(size=3), rng.normal(size=3)
        lhs = so3.adjoint(g, so3.bracket(x, y))
        rhs = so3.bracket(so3.adjoint(g, x), so3.adjoint(g, y))
        assert np.abs(lhs - rhs).max() <= 1e-10


def test_orthonormality_after_many_composes(so3):
    rng = np.random.default_rng(11)
    R = so3.identity()
    for _ in range(10_000):
        R = so3.project(so3.compose(R, so3.exp(0.05 * rng.normal(size=3))))
    assert np.abs(R.T @ R - np.eye(3)).max() <= 1e-9
    assert np.linalg.det(R) > 0


def test_generic_matrix_backend_round_trip(so3):
    alg = LieAlgebra.from_structure_constants(so3.structure_constants,
                                              basis=so3.basis)
    rng = np.random.default_rng(12)
    v = 0.8 * rng.normal(size=3)
    g = alg.exp(v)
    assert np.allclose(alg.log(g), v, atol=1e-10)
    x = rng.normal(size=3)
    assert np.allclose(alg.adjoint(g, x), so3.adjoint(so3.project(g), x),
                       atol=1e-9)


def test_generic_backend_without_basis_has_no_group_ops(so3):
    alg = LieAlgebra.from_structure_constants(so3.structure_constants)
    assert np.allclose(alg.bracket(E[0], E[1]), E[2])
    with pytest.raises(ValueError):
        alg.exp(E[0])


def test_hat_vee_round_trip(so3):
    rng = np.random.default_rng(13)
    v = rng.normal(size=3)
    assert np.allclose(so3.vee(so3.hat(v)), v, atol=1e-14)


def test_input_validation(so3):
    with pytest.raises(ValueError):
        so3.bracket(np.ones(2), np.ones(3))
    with pytest.raises(ValueError):
        so3.exp(np.array([np.nan, 0.0, 0.0]))
    with pytest.raises(ValueError):
        so3.compose(np.eye(3), np.eye(2))


def test_batched_so3_helpers_match_scalar():
    rng = np.random.default_rng(14)
    V = rng.normal(size=(40, 3))
    V[0] = 0.0
    V[1] = np.array([1e-9, 0.0, 0.0])
    R = so3_exp_batch(V)
    for i in range(V.shape[0]):
        assert np.allclose(R[i], so3_exp(V[i]), atol=1e-14)
    W = so3_log_batch(R)
    for i in range(V.shape[0]):
        assert np.allclose(W[i], so3_log(R[i]), atol=1e-13)
