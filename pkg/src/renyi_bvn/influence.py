"""Influence functions of the robust estimator and of the Wald-type test functionals.

At the model the influence function of the estimator is ``S^-1 Psi(t)``.  For
the bivariate normal this reduces to

    IF(mu_j)    = (alpha+1)^2 w^-alpha (t_j - mu_j)
    IF(sigma_j) = (alpha+1)^3 / 2 w^-alpha sigma_j (z_j^2 - 1/(alpha+1))
    IF(rho)     = (alpha+1)^3 w^-alpha (z_1 z_2 - rho (z_1^2 + z_2^2) / 2)

with ``z_j`` the standardized coordinates and ``w`` the exponentiated half
Mahalanobis distance.  For ``alpha > 0`` the factor ``w^-alpha`` makes every
component bounded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model
from .errors import DomainError
from .model import PARAM_NAMES, Theta
from .wald import Constraint, restriction_quadratic


@dataclass(frozen=True)
class IFVector:
    at_point: tuple[float, float]
    values: np.ndarray


def influence_values(theta: Theta, alpha: float, x, y) -> np.ndarray:
    """Closed-form influence function; broadcasts over ``x, y`` and appends an axis of length 5."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a1 = alpha + 1.0
    wa = np.exp(-0.5 * alpha * model.mahalanobis(theta, x, y))
    zx = (x - theta.mu1) / theta.sigma1
    zy = (y - theta.mu2) / theta.sigma2
    r = theta.rho
    out = np.stack(np.broadcast_arrays(
        a1**2 * wa * (x - theta.mu1),
        a1**2 * wa * (y - theta.mu2),
        0.5 * a1**3 * wa * theta.sigma1 * (zx * zx - 1.0 / a1),
        0.5 * a1**3 * wa * theta.sigma2 * (zy * zy - 1.0 / a1),
        a1**3 * wa * (zx * zy - 0.5 * r * (zx * zx + zy * zy)),
    ), axis=-1)
    return out


def influence(theta: Theta, alpha: float, x: float, y: float) -> IFVector:
    if not alpha >= 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    return IFVector((float(x), float(y)), influence_values(theta, alpha, x, y))


def influence_matrix_form(theta: Theta, alpha: float, x, y) -> np.ndarray:
    """``S^-1 f^alpha (u - c)`` evaluated directly from the model blocks."""
    b = model.blocks(theta, alpha)
    psi = model.density(theta, x, y)[..., None] ** alpha * (model.score(theta, x, y) - b.c)
    return psi @ b.S_inv.T


def second_order_if(theta: Theta, alpha: float, constraint: Constraint, x, y):
    """``2 IF' M (M' V M)^-1 M' IF`` at the model; broadcasts over ``x, y``."""
    _, M, inner_inv = restriction_quadratic(theta, alpha, constraint)
    proj = influence_values(theta, alpha, x, y) @ M
    return 2.0 * np.einsum("...i,ij,...j->...", proj, inner_inv, proj)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid in standardized units around the mean."""

    x_min: float = -5.0
    x_max: float = 5.0
    nx: int = 101
    y_min: float = -5.0
    y_max: float = 5.0
    ny: int = 101

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise DomainError("grid needs at least one point per axis")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise DomainError("grid bounds are reversed")
        if (self.nx == 1) != (self.x_min == self.x_max) or (self.ny == 1) != (self.y_min == self.y_max):
            raise DomainError("a single-point axis needs equal bounds and vice versa")

    def points(self, theta: Theta):
        zx = np.linspace(self.x_min, self.x_max, self.nx)
        zy = np.linspace(self.y_min, self.y_max, self.ny)
        gx, gy = np.meshgrid(theta.mu1 + theta.sigma1 * zx, theta.mu2 + theta.sigma2 * zy,
                             indexing="ij")
        return gx.ravel(), gy.ravel()


def if_surface(theta: Theta, alpha: float, which, grid: GridSpec = GridSpec()) -> np.ndarray:
    """Evaluate an influence surface on ``grid``.

    ``which`` is a parameter name (``"mu1"``, ..., ``"rho"``) or a
    :class:`~renyi_bvn.wald.Constraint` for the second-order test influence.
    Returns an ``(nx * ny, 3)`` array of ``x, y, value`` rows, with ``x`` the
    slow index.
    """
    x, y = grid.points(theta)
    if isinstance(which, Constraint):
        vals = second_order_if(theta, alpha, which, x, y)
    elif which in PARAM_NAMES:
        vals = influence_values(theta, alpha, x, y)[:, PARAM_NAMES.index(which)]
    else:
        raise DomainError(f"unknown surface target {which!r}")
    return np.column_stack([x, y, vals])


def contamination_if(theta: Theta, alpha: float, x: float, y: float, eps: float = 1e-4,
                     nodes: int = 96, half_width: float = 12.0) -> np.ndarray:
    """Finite-contamination approximation ``(T_eps - T_0) / eps`` of the influence function.

    ``T_eps`` solves the population estimating equation under
    ``(1 - eps) F_theta + eps delta_(x, y)``; the model expectation uses a
    Gauss-Legendre tensor rule over ``half_width`` standardized units, and
    ``T_0`` is solved with the same rule so that quadrature bias cancels.
    """
    from scipy.optimize import root

    g, gw = np.polynomial.legendre.leggauss(nodes)
    g = g * half_width
    gw = gw * half_width
    L = np.linalg.cholesky(theta.cov)
    z1, z2 = np.meshgrid(g, g, indexing="ij")
    px = theta.mu1 + L[0, 0] * z1.ravel()
    py = theta.mu2 + L[1, 0] * z1.ravel() + L[1, 1] * z2.ravel()
    pw = np.outer(gw, gw).ravel() * L[0, 0] * L[1, 1] * model.density(theta, px, py)

    def psi(t: Theta, xs, ys):
        return model.density(t, xs, ys)[..., None] ** alpha * (model.score(t, xs, ys) - model.c_vector(t, alpha))

    def equations(p, e):
        t = Theta.from_array(p)
        return (1.0 - e) * (pw @ psi(t, px, py)) + e * psi(t, np.array(x), np.array(y))

    p0 = theta.as_array()
    solved = []
    for e in (0.0, eps):
        sol = root(equations, p0, args=(e,), method="hybr", tol=1e-14)
        if np.max(np.abs(sol.fun)) > 1e-11:
            raise ArithmeticError(f"contamination equations did not solve: {sol.message}")
        solved.append(sol.x)
    return (solved[1] - solved[0]) / eps
