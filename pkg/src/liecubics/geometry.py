"""Left-invariant metric machinery on the algebra.

An inner product on the algebra determines a left-invariant metric on the
group.  Everything the reduced equations need lives at the algebra level:
flat/sharp, the metric adjoint of ad, the algebra-level Levi-Civita
connection on left-invariant fields, and its curvature endomorphism.  All
four are multilinear, so they are precomputed once as coordinate tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .algebra import AlgebraVector, LieAlgebra

_SPD_TOL = 1e-12
_AD_INVARIANCE_TOL = 1e-9
_AD_INVARIANCE_SAMPLES = 32


@dataclass(frozen=True)
class Metric:
    """SPD inner product ``<x, y> = x^T M y`` on the algebra basis.

    ``bi_invariant`` asserts Ad-invariance; the claim is verified on random
    samples at construction, so the closed-form shortcuts downstream can
    never be applied to a metric that does not support them.
    """

    algebra: LieAlgebra
    matrix: np.ndarray
    bi_invariant: bool = False

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        d = self.algebra.dim
        if M.shape != (d, d):
            raise ValueError(f"metric matrix must be {d}x{d}, got {M.shape}")
        if np.abs(M - M.T).max() > _SPD_TOL * max(1.0, np.abs(M).max()):
            raise ValueError("metric matrix is not symmetric")
        M = 0.5 * (M + M.T)
        if np.linalg.eigvalsh(M).min() <= _SPD_TOL:
            raise ValueError("metric matrix is not positive definite")
        object.__setattr__(self, "matrix", M)
        if self.bi_invariant and not self.algebra.is_abelian:
            self._check_ad_invariance()

    def _check_ad_invariance(self):
        rng = np.random.default_rng(20210417)
        d = self.algebra.dim
        for _ in range(_AD_INVARIANCE_SAMPLES):
            g = self.algebra.exp(rng.normal(size=d))
            x = rng.normal(size=d)
            y = rng.normal(size=d)
            lhs = self.inner(self.algebra.adjoint(g, x), self.algebra.adjoint(g, y))
            rhs = self.inner(x, y)
            if abs(lhs - rhs) > _AD_INVARIANCE_TOL * (1.0 + abs(rhs)):
                raise ValueError(
                    "metric flagged bi-invariant but fails the Ad-invariance check "
                    f"(|{lhs:.6g} - {rhs:.6g}|)"
                )

    @classmethod
    def identity(cls, algebra: LieAlgebra, scale: float = 1.0,
                 bi_invariant: bool = False) -> "Metric":
        return cls(algebra, scale * np.eye(algebra.dim), bi_invariant=bi_invariant)

    # -- scalar operations ---------------------------------------------------

    @cached_property
    def _chol(self):
        return cho_factor(self.matrix)

    def inner(self, x: AlgebraVector, y: AlgebraVector) -> float:
        x = self.algebra.check_vector(x)
        y = self.algebra.check_vector(y)
        return float(x @ self.matrix @ y)

    def norm(self, x: AlgebraVector) -> float:
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def flat(self, x: AlgebraVector) -> np.ndarray:
        """Lower the index: covector coordinates of the vector x."""
        return self.matrix @ self.algebra.check_vector(x)

    def sharp(self, alpha) -> AlgebraVector:
        """Raise the index: vector with <sharp(a), y> = a(y) for all y."""
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.algebra.dim,):
            raise ValueError("covector has wrong length")
        return cho_solve(self._chol, alpha)

    # -- precomputed multilinear tables ---------------------------------------

    @cached_property
    def ad_dagger_table(self) -> np.ndarray:
        """D[:, i, j] is the metric adjoint of ad applied to basis vectors.

        Defined by <D[:, i, j], s> = <e_j, [e_i, s]> for all s, obtained by
        solving M z = ad(e_i)^T M e_j.
        """
        d = self.algebra.dim
        table = np.zeros((d, d, d))
        eye = np.eye(d)
        for i in range(d):
            A = self.algebra.ad_matrix(eye[i])
            table[:, i, :] = cho_solve(self._chol, A.T @ self.matrix)
        return table

    @cached_property
    def connection_table(self) -> np.ndarray:
        """G[:, i, j] is the algebra-level Levi-Civita connection on basis pairs."""
        c = self.algebra.structure_constants
        D = self.ad_dagger_table
        return 0.5 * (c - D - D.transpose(0, 2, 1))

    @cached_property
    def curvature_table(self) -> np.ndarray:
        """R4[:, i, j, k] realizes the curvature endomorphism R(x, y) z.

        Commutator defect of the connection evaluated on left-invariant
        fields; exact because constant algebra elements correspond to
        left-invariant fields.
        """
        G = self.connection_table
        c = self.algebra.structure_constants
        return (np.einsum("dim,mjk->dijk", G, G)
                - np.einsum("djm,mik->dijk", G, G)
                - np.einsum("dmk,mij->dijk", G, c))

    # -- operator evaluations --------------------------------------------------

    def ad_dagger(self, xi: AlgebraVector, eta: AlgebraVector) -> AlgebraVector:
        """The unique z with <z, s> = <eta, [xi, s]> for all s."""
        xi = self.algebra.check_vector(xi)
        eta = self.algebra.check_vector(eta)
        return np.einsum("dij,i,j->d", self.ad_dagger_table, xi, eta)

    def connection(self, xi: AlgebraVector, eta: AlgebraVector) -> AlgebraVector:
        xi = self.algebra.check_vector(xi)
        eta = self.algebra.check_vector(eta)
        return np.einsum("dij,i,j->d", self.connection_table, xi, eta)

    def curvature(self, xi: AlgebraVector, eta: AlgebraVector,
                  sigma: AlgebraVector) -> AlgebraVector:
        xi = self.algebra.check_vector(xi)
        eta = self.algebra.check_vector(eta)
        sigma = self.algebra.check_vector(sigma)
        return np.einsum("dijk,i,j,k->d", self.curvature_table, xi, eta, sigma)
