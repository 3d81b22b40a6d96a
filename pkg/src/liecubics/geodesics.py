"""Geodesic flow, Riemannian exponential/logarithm and distance.

The geodesic equation for a left-invariant metric reduces to an ODE on the
algebra (body angular velocity), integrated here with a fourth-order
Runge-Kutta-Munthe-Kaas step so the reconstructed group element stays on the
group.  The Riemannian logarithm inverts the exponential by damped-Newton
shooting on the initial velocity; bi-invariant metrics (and abelian groups)
take the closed-form one-parameter-subgroup path instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import AlgebraVector, GroupElement, LieAlgebra
from .errors import NoConvergenceError
from .geometry import Metric


@dataclass(frozen=True)
class GeodesicSettings:
    step: float = 1e-3
    tolerance: float = 1e-10
    max_iterations: int = 50

    def __post_init__(self):
        if self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


_DEFAULT = GeodesicSettings()


def euler_arnold_rhs(metric: Metric, xi: AlgebraVector) -> AlgebraVector:
    """Body-velocity rate along a geodesic (the Euler-Arnold equation)."""
    return metric.ad_dagger(xi, xi)


def has_closed_form(metric: Metric) -> bool:
    """Geodesics through a point are translated one-parameter subgroups."""
    return metric.algebra.is_abelian or metric.bi_invariant


def dexpinv(algebra: LieAlgebra, theta: AlgebraVector,
            xi: AlgebraVector) -> AlgebraVector:
    """Inverse differential of exp for left reconstruction g' = g xi.

    Truncated after the double-bracket term, which keeps a one-step
    Runge-Kutta-Munthe-Kaas update at order four.
    """
    b1 = algebra.bracket(theta, xi)
    return xi + 0.5 * b1 + algebra.bracket(theta, b1) / 12.0


def geodesic_path(metric: Metric, g0: GroupElement, v: AlgebraVector,
                  t: float, settings: GeodesicSettings = _DEFAULT):
    """Integrate the geodesic flow; returns (times, velocities, endpoints).

    ``velocities[k]`` is the body velocity at ``times[k]`` and
    ``endpoints[k]`` the group element, with endpoints[0] = g0.
    """
    alg = metric.algebra
    g = alg.check_element(g0).copy()
    xi = alg.check_vector(v).copy()
    if t == 0.0:
        return np.array([0.0]), xi[None, :].copy(), [g]
    n = max(1, round(abs(t) / settings.step))
    h = t / n
    times = np.linspace(0.0, t, n + 1)
    xis = np.empty((n + 1, alg.dim))
    gs = [g]
    xis[0] = xi
    for k in range(n):
        xi, g = _geodesic_step(metric, g, xi, h)
        xis[k + 1] = xi
        gs.append(g)
    return times, xis, gs


def _geodesic_step(metric, g, xi, h):
    alg = metric.algebra
    zero = np.zeros(alg.dim)

    def rates(theta, x):
        return dexpinv(alg, theta, x), metric.ad_dagger(x, x)

    k1t, k1x = rates(zero, xi)
    k2t, k2x = rates(0.5 * h * k1t, xi + 0.5 * h * k1x)
    k3t, k3x = rates(0.5 * h * k2t, xi + 0.5 * h * k2x)
    k4t, k4x = rates(h * k3t, xi + h * k3x)
    theta = (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
    xi_new = xi + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    g_new = alg.project(alg.compose(g, alg.exp(theta)))
    return xi_new, g_new


def riemannian_exp(metric: Metric, g0: GroupElement, v: AlgebraVector,
                   t: float = 1.0, settings: GeodesicSettings = _DEFAULT,
                   closed_form: bool = True) -> GroupElement:
    """Endpoint of the geodesic from g0 with initial body velocity v, time t."""
    alg = metric.algebra
    g0 = alg.check_element(g0)
    v = alg.check_vector(v)
    if t == 0.0:
        return g0.copy()
    if closed_form and has_closed_form(metric):
        return alg.compose(g0, alg.exp(t * v))
    _, _, gs = geodesic_path(metric, g0, v, t, settings)
    return gs[-1]


def riemannian_log(metric: Metric, g0: GroupElement, g1: GroupElement,
                   settings: GeodesicSettings = _DEFAULT,
                   closed_form: bool = True) -> AlgebraVector:
    """Initial body velocity v with riemannian_exp(g0, v, 1) = g1.

    Solved by shooting with a damped Newton iteration on v; the group
    logarithm of the relative displacement seeds the iteration (and is the
    exact answer in the bi-invariant case).  Raises NoConvergenceError when
    the target is outside the reachable convex neighborhood.
    """
    alg = metric.algebra
    g0 = alg.check_element(g0)
    g1 = alg.check_element(g1)
    rel = alg.compose(alg.inverse(g0), g1)
    guess = alg.log(rel)
    if closed_form and has_closed_form(metric):
        return guess

    def residual(v):
        end = riemannian_exp(metric, g0, v, 1.0, settings, closed_form=False)
        return alg.log(alg.compose(alg.inverse(end), g1))

    v = guess.copy()
    r = residual(v)
    best_v, best_norm = v.copy(), float(np.linalg.norm(r))
    fd = 1e-7
    for _ in range(settings.max_iterations):
        rnorm = float(np.linalg.norm(r))
        if rnorm < best_norm:
            best_v, best_norm = v.copy(), rnorm
        if rnorm <= settings.tolerance:
            return v
        J = np.empty((alg.dim, alg.dim))
        for i in range(alg.dim):
            dv = np.zeros(alg.dim)
            dv[i] = fd
            J[:, i] = (residual(v + dv) - r) / fd
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        alpha = 1.0
        accepted = False
        for _ in range(25):
            v_try = v + alpha * delta
            r_try = residual(v_try)
            if np.linalg.norm(r_try) < rnorm:
                v, r = v_try, r_try
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
    rnorm = float(np.linalg.norm(r))
    if rnorm <= settings.tolerance:
        return v
    raise NoConvergenceError(
        f"geodesic shooting stalled at residual {best_norm:.3e} "
        f"(tolerance {settings.tolerance:g})",
        best=best_v, residual_norm=best_norm,
    )


def distance(metric: Metric, g0: GroupElement, g1: GroupElement,
             settings: GeodesicSettings = _DEFAULT,
             closed_form: bool = True) -> float:
    """Riemannian distance within a geodesically convex neighborhood."""
    v = riemannian_log(metric, g0, g1, settings, closed_form)
    return metric.norm(v)
