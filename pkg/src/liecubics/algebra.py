"""Lie group and Lie algebra kernel.

Coordinates, bracket, group exponential/logarithm and adjoint action for the
translation groups R^n, the rotation group SO(3), and a generic matrix-group
backend driven by user-supplied structure constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import CutLocusError

# Type aliases: algebra vectors are coordinate arrays of shape (dim,); group
# elements are coordinate vectors (abelian) or square orthogonal/invertible
# matrices (matrix groups).
AlgebraVector = np.ndarray
GroupElement = np.ndarray

ABELIAN = "abelian"
SO3 = "so3"
GENERIC_MATRIX = "generic_matrix"

_STRUCTURE_TOL = 1e-12
_SO3_SMALL = 1e-4
_SO3_NEAR_PI = np.pi - 1e-2


def so3_hat(v: AlgebraVector) -> np.ndarray:
    """Map coordinates to a skew-symmetric matrix so that hat(x) y = x cross y."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def so3_vee(X: np.ndarray) -> AlgebraVector:
    return np.array([X[2, 1], X[0, 2], X[1, 0]])


def so3_exp(v: AlgebraVector) -> GroupElement:
    """Rodrigues formula, series-stabilized near zero."""
    theta2 = float(v @ v)
    K = so3_hat(v)
    if theta2 < _SO3_SMALL**2:
        a = 1.0 - theta2 / 6.0 + theta2**2 / 120.0
        b = 0.5 - theta2 / 24.0 + theta2**2 / 720.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R: GroupElement, cut_tol: float = 1e-6) -> AlgebraVector:
    """Rotation vector of R; rejects rotations at or past the cut locus."""
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(c))
    if theta >= np.pi - cut_tol:
        raise CutLocusError(
            f"rotation angle {theta:.12g} within {cut_tol:g} of the cut locus"
        )
    w = so3_vee(R - R.T) / 2.0  # equals sin(theta) * axis
    if theta < _SO3_SMALL:
        theta2 = theta * theta
        return w * (1.0 + theta2 / 6.0 + 7.0 * theta2**2 / 360.0)
    if theta > _SO3_NEAR_PI:
        # Symmetrizing removes the sin(theta) skew part exactly, leaving
        # axis axis^T; recover the axis from its largest column and orient
        # it with the (small but nonzero) skew part.
        B = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
        axis = axis / np.linalg.norm(axis)
        if axis @ w < 0.0:
            axis = -axis
        return theta * axis
    return w * (theta / np.sin(theta))


def so3_exp_batch(V: np.ndarray) -> np.ndarray:
    """Rodrigues formula applied to a stack of rotation vectors, shape (n, 3)."""
    V = np.asarray(V, dtype=float)
    n = V.shape[0]
    theta2 = np.einsum("nd,nd->n", V, V)
    small = theta2 < _SO3_SMALL**2
    theta = np.sqrt(np.where(small, 1.0, theta2))
    a = np.where(small, 1.0 - theta2 / 6.0 + theta2**2 / 120.0,
                 np.sin(theta) / theta)
    b = np.where(small, 0.5 - theta2 / 24.0 + theta2**2 / 720.0,
                 (1.0 - np.cos(theta)) / np.where(small, 1.0, theta2))
    K = np.zeros((n, 3, 3))
    K[:, 0, 1] = -V[:, 2]
    K[:, 0, 2] = V[:, 1]
    K[:, 1, 0] = V[:, 2]
    K[:, 1, 2] = -V[:, 0]
    K[:, 2, 0] = -V[:, 1]
    K[:, 2, 1] = V[:, 0]
    return np.eye(3)[None] + a[:, None, None] * K + b[:, None, None] * (K @ K)


def so3_log_batch(R: np.ndarray, cut_tol: float = 1e-6) -> np.ndarray:
    """Rotation vectors of a stack of rotation matrices, shape (n, 3, 3)."""
    R = np.asarray(R, dtype=float)
    c = np.clip((np.einsum("nii->n", R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(c)
    if np.any(theta >= np.pi - cut_tol):
        raise CutLocusError("batch contains rotations at the cut locus")
    W = 0.5 * np.stack([
        R[:, 2, 1] - R[:, 1, 2],
        R[:, 0, 2] - R[:, 2, 0],
        R[:, 1, 0] - R[:, 0, 1],
    ], axis=1)
    small = theta < _SO3_SMALL
    factor = np.where(small,
                      1.0 + theta**2 / 6.0 + 7.0 * theta**4 / 360.0,
                      theta / np.sin(np.where(small, 1.0, theta)))
    out = W * factor[:, None]
    near = theta > _SO3_NEAR_PI
    if np.any(near):
        for i in np.nonzero(near)[0]:
            out[i] = so3_log(R[i], cut_tol)
    return out


def _so3_structure_constants() -> np.ndarray:
    # [e_i, e_j] = sum_k eps_{ijk} e_k, the cross product in coordinates.
    c = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        c[k, i, j] = 1.0
        c[k, j, i] = -1.0
    return c


def _polar_rotation(R: np.ndarray) -> np.ndarray:
    # Newton-Schulz step toward the polar factor: quadratically accurate for
    # the near-orthogonal drift left by one integrator step, and smoother
    # than an SVD (no factorization noise feeding finite-difference checks).
    E = R.T @ R - np.eye(R.shape[0])
    if np.abs(E).max() < 1e-4:
        return R @ (np.eye(R.shape[0]) - 0.5 * E)
    U, _, Vt = np.linalg.svd(R)
    P = U @ Vt
    if np.linalg.det(P) < 0.0:
        U = U.copy()
        U[:, -1] *= -1.0
        P = U @ Vt
    return P


@dataclass(frozen=True)
class LieAlgebra:
    """A finite-dimensional Lie algebra with an optional matrix realization.

    ``structure_constants`` is the rank-3 array c[k, i, j] with
    [e_i, e_j] = sum_k c[k, i, j] e_k.  For matrix kinds, ``basis`` holds the
    hat-map images of the coordinate basis, shape (dim, n, n).
    """

    dim: int
    structure_constants: np.ndarray
    kind: str
    basis: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.structure_constants, dtype=float)
        if c.shape != (self.dim,) * 3:
            raise ValueError(f"structure constants must have shape {(self.dim,)*3}")
        object.__setattr__(self, "structure_constants", c)
        if np.abs(c + c.transpose(0, 2, 1)).max() > _STRUCTURE_TOL:
            raise ValueError("structure constants are not antisymmetric in (i, j)")
        # [[e_i, e_j], e_k] in coordinates, then the cyclic sum.
        B = np.einsum("mij,lmk->lijk", c, c)
        jac = B + np.einsum("ljki->lijk", B) + np.einsum("lkij->lijk", B)
        if np.abs(jac).max() > _STRUCTURE_TOL:
            raise ValueError("structure constants violate the Jacobi identity")
        if self.kind not in (ABELIAN, SO3, GENERIC_MATRIX):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.basis is not None:
            basis = np.asarray(self.basis, dtype=float)
            if basis.ndim != 3 or basis.shape[0] != self.dim or basis.shape[1] != basis.shape[2]:
                raise ValueError("basis must have shape (dim, n, n)")
            object.__setattr__(self, "basis", basis)
            comm = np.einsum("iab,jbc->ijac", basis, basis)
            comm = comm - comm.transpose(1, 0, 2, 3)
            expected = np.einsum("kij,kab->ijab", c, basis)
            if np.abs(comm - expected).max() > 1e-10:
                raise ValueError("basis commutators do not match the structure constants")
        elif self.kind == SO3:
            raise ValueError("the so3 kind requires basis matrices")

    # -- constructors ------------------------------------------------------

    @classmethod
    def abelian(cls, dim: int) -> "LieAlgebra":
        if dim < 1:
            raise ValueError("dim must be positive")
        return cls(dim=dim, structure_constants=np.zeros((dim, dim, dim)), kind=ABELIAN)

    @classmethod
    def so3(cls) -> "LieAlgebra":
        basis = np.stack([so3_hat(e) for e in np.eye(3)])
        return cls(dim=3, structure_constants=_so3_structure_constants(),
                   kind=SO3, basis=basis)

    @classmethod
    def from_structure_constants(cls, constants, basis=None) -> "LieAlgebra":
        """Generic backend; group operations require basis matrices."""
        c = np.asarray(constants, dtype=float)
        return cls(dim=c.shape[0], structure_constants=c, kind=GENERIC_MATRIX,
                   basis=None if basis is None else np.asarray(basis, dtype=float))

    # -- coordinate-level operations ----------------------------------------

    @property
    def is_abelian(self) -> bool:
        return self.kind == ABELIAN

    @property
    def matrix_size(self) -> int:
        if self.basis is None:
            raise ValueError("algebra has no matrix realization")
        return self.basis.shape[1]

    def check_vector(self, x) -> AlgebraVector:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected algebra vector of length {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("algebra vector has non-finite entries")
        return x

    def check_element(self, g) -> GroupElement:
        g = np.asarray(g, dtype=float)
        if self.kind == ABELIAN:
            if g.shape != (self.dim,):
                raise ValueError(f"expected group element of length {self.dim}, got shape {g.shape}")
        else:
            n = self.matrix_size
            if g.shape != (n, n):
                raise ValueError(f"expected {n}x{n} group element, got shape {g.shape}")
        return g

    def bracket(self, x: AlgebraVector, y: AlgebraVector) -> AlgebraVector:
        x = self.check_vector(x)
        y = self.check_vector(y)
        return np.einsum("kij,i,j->k", self.structure_constants, x, y)

    def ad_matrix(self, x: AlgebraVector) -> np.ndarray:
        """Matrix of ad_x so that ad_matrix(x) @ y = bracket(x, y)."""
        return np.einsum("kij,i->kj", self.structure_constants, self.check_vector(x))

    # -- group operations ----------------------------------------------------

    def identity(self) -> GroupElement:
        if self.kind == ABELIAN:
            return np.zeros(self.dim)
        return np.eye(self.matrix_size)

    def hat(self, x: AlgebraVector) -> np.ndarray:
        if self.basis is None:
            raise ValueError("algebra has no matrix realization")
        return np.einsum("d,dab->ab", self.check_vector(x), self.basis)

    def vee(self, X: np.ndarray) -> AlgebraVector:
        if self.basis is None:
            raise ValueError("algebra has no matrix realization")
        return self._vee_pinv @ np.asarray(X, dtype=float).ravel()

    @cached_property
    def _vee_pinv(self) -> np.ndarray:
        flat = self.basis.reshape(self.dim, -1)
        return np.linalg.pinv(flat.T)

    def exp(self, x: AlgebraVector) -> GroupElement:
        x = self.check_vector(x)
        if self.kind == ABELIAN:
            return x.copy()
        if self.kind == SO3:
            return so3_exp(x)
        from scipy.linalg import expm

        return expm(self.hat(x))

    def log(self, g: GroupElement, cut_tol: float = 1e-6) -> AlgebraVector:
        g = self.check_element(g)
        if self.kind == ABELIAN:
            return g.copy()
        if self.kind == SO3:
            return so3_log(g, cut_tol)
        from scipy.linalg import logm

        X = logm(g)
        if np.abs(X.imag).max() > 1e-9:
            raise CutLocusError("matrix logarithm left the real injectivity domain")
        return self.vee(X.real)

    def compose(self, g: GroupElement, h: GroupElement) -> GroupElement:
        g = self.check_element(g)
        h = self.check_element(h)
        if self.kind == ABELIAN:
            return g + h
        return g @ h

    def inverse(self, g: GroupElement) -> GroupElement:
        g = self.check_element(g)
        if self.kind == ABELIAN:
            return -g
        if self.kind == SO3:
            return g.T.copy()
        return np.linalg.inv(g)

    def adjoint(self, g: GroupElement, x: AlgebraVector) -> AlgebraVector:
        g = self.check_element(g)
        x = self.check_vector(x)
        if self.kind == ABELIAN:
            return x.copy()
        if self.kind == SO3:
            return g @ x
        return self.vee(g @ self.hat(x) @ np.linalg.inv(g))

    def project(self, g: GroupElement) -> GroupElement:
        """Re-orthonormalize a drifted rotation; identity for other kinds."""
        g = self.check_element(g)
        if self.kind == SO3:
            return _polar_rotation(g)
        return g
