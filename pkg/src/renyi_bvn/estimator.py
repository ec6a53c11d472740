"""Maximum likelihood and minimum Renyi pseudodistance estimation.

The robust estimator at tuning parameter ``alpha`` solves

    sum_i w_i^(-alpha) (u_theta(X_i, Y_i) - c_alpha(theta)) = 0,

whose solution is a weighted mean / covariance fixed point.  Working with
``zeta_j^2 = sigma_j^2 / (alpha + 1)`` the weights become
``exp(-alpha / (alpha + 1) * d2 / 2)`` with ``d2`` the Mahalanobis distance
under ``zeta``, and each step simply recomputes weighted moments (iteratively
reweighted moments, IRM).  Tuning parameters are visited on the grid
``0, 1/K, ..., 1`` with each fit warm-started from the previous one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import DegenerateSampleError, DomainError
from .model import Theta

RHO_CLAMP = 1.0 - 1e-9
DEFAULT_GRID_K = 20
DEFAULT_XI = 1e-8
DEFAULT_MAX_INNER = 500


@dataclass(frozen=True)
class PairedSample:
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.ascontiguousarray(self.xs, dtype=float)
        ys = np.ascontiguousarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise DomainError(f"xs and ys must be 1-d of equal length, got {xs.shape} and {ys.shape}")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise DomainError("sample contains non-finite values")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @classmethod
    def from_array(cls, data) -> "PairedSample":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != 2:
            raise DomainError(f"expected an (n, 2) array, got shape {data.shape}")
        return cls(data[:, 0], data[:, 1])

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    def uv(self) -> "PairedSample":
        """Sum/difference transform (X + Y, X - Y)."""
        return PairedSample(self.xs + self.ys, self.xs - self.ys)

    def drop(self, indices) -> "PairedSample":
        keep = np.ones(self.n, dtype=bool)
        keep[list(indices)] = False
        return PairedSample(self.xs[keep], self.ys[keep])


@dataclass(frozen=True)
class ReparamTheta:
    """Location, squared working scales ``zeta^2 = sigma^2 / (alpha + 1)`` and correlation."""

    mu1: float
    mu2: float
    zeta1_sq: float
    zeta2_sq: float
    rho: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2, self.zeta1_sq, self.zeta2_sq, self.rho])

    def to_theta(self, alpha: float) -> Theta:
        a1 = alpha + 1.0
        return Theta(self.mu1, self.mu2, math.sqrt(a1 * self.zeta1_sq),
                     math.sqrt(a1 * self.zeta2_sq), self.rho)

    @classmethod
    def from_theta(cls, theta: Theta, alpha: float) -> "ReparamTheta":
        a1 = alpha + 1.0
        return cls(theta.mu1, theta.mu2, theta.sigma1**2 / a1, theta.sigma2**2 / a1, theta.rho)


@dataclass(frozen=True)
class EstimateTrace:
    alpha: float
    theta_hat: Theta
    vartheta_hat: ReparamTheta
    weights: np.ndarray = field(repr=False)
    inner_iterations: int
    converged: bool
    objective: float
    eq_residual_norm: float
    rho_clamped: bool = False


def _check_sample(sample: PairedSample):
    if sample.n < 3:
        raise DegenerateSampleError(f"need at least 3 pairs, got {sample.n}")


def mle(sample: PairedSample) -> Theta:
    """Sample means, 1/n standard deviations and Pearson correlation."""
    _check_sample(sample)
    x, y = sample.xs, sample.ys
    dx = x - x.mean()
    dy = y - y.mean()
    vx = np.mean(dx * dx)
    vy = np.mean(dy * dy)
    if vx <= 0 or vy <= 0:
        raise DegenerateSampleError("a coordinate of the sample is constant")
    rho = np.mean(dx * dy) / math.sqrt(vx * vy)
    if abs(rho) > model.RHO_GUARD:
        raise DegenerateSampleError(f"sample correlation is {rho}; the pairs are collinear")
    return Theta(x.mean(), y.mean(), math.sqrt(vx), math.sqrt(vy), rho)


def _irm_inner(x, y, start: np.ndarray, alpha: float, xi: float, max_inner: int, monitor=None):
    """Iterate weighted moments at fixed ``alpha`` from ``start`` (a vartheta array).

    Returns ``(vartheta, weights, iterations, converged, clamped)``.
    """
    n = x.shape[0]
    mu1, mu2, z1, z2, rho = start
    shrink = alpha / (alpha + 1.0)
    clamped = False
    w = np.ones(n)
    for it in range(1, max_inner + 1):
        ex = (x - mu1) / math.sqrt(z1)
        ey = (y - mu2) / math.sqrt(z2)
        d2 = (ex * ex - 2.0 * rho * ex * ey + ey * ey) / (1.0 - rho * rho)
        w = np.exp(-0.5 * shrink * d2)
        t = w.sum()
        if not t >= n * 1e-12:
            raise DegenerateSampleError(f"weights collapsed at alpha={alpha} (sum {t:.3g})")
        new_mu1 = np.dot(w, x) / t
        new_mu2 = np.dot(w, y) / t
        rx = x - new_mu1
        ry = y - new_mu2
        new_z1 = np.dot(w, rx * rx) / t
        new_z2 = np.dot(w, ry * ry) / t
        if not (new_z1 > 0 and new_z2 > 0):
            raise DegenerateSampleError(f"weighted variance vanished at alpha={alpha}")
        new_rho = np.dot(w, rx * ry) / (t * math.sqrt(new_z1 * new_z2))
        if abs(new_rho) > RHO_CLAMP:
            new_rho = math.copysign(RHO_CLAMP, new_rho)
            clamped = True
        step = math.sqrt((new_mu1 - mu1) ** 2 + (new_mu2 - mu2) ** 2 + (new_z1 - z1) ** 2
                         + (new_z2 - z2) ** 2 + (new_rho - rho) ** 2)
        mu1, mu2, z1, z2, rho = new_mu1, new_mu2, new_z1, new_z2, new_rho
        if monitor is not None:
            monitor(alpha, np.array([mu1, mu2, z1, z2, rho]))
        if step < xi:
            return np.array([mu1, mu2, z1, z2, rho]), w, it, True, clamped
    return np.array([mu1, mu2, z1, z2, rho]), w, max_inner, False, clamped


def _make_trace(sample, alpha, vartheta, weights, iterations, converged, clamped) -> EstimateTrace:
    rep = ReparamTheta(*vartheta.tolist())
    theta = rep.to_theta(alpha)
    return EstimateTrace(
        alpha=float(alpha),
        theta_hat=theta,
        vartheta_hat=rep,
        weights=weights,
        inner_iterations=iterations,
        converged=converged,
        objective=objective(sample, theta, alpha),
        eq_residual_norm=eq_residual(sample, theta, alpha),
        rho_clamped=clamped,
    )


def irm_fit(sample: PairedSample, grid_K: int = DEFAULT_GRID_K, xi: float = DEFAULT_XI,
            max_inner: int = DEFAULT_MAX_INNER, alpha_max: float = 1.0,
            monitor=None) -> list[EstimateTrace]:
    """Fit along the grid ``alpha_k = k / grid_K`` for all ``alpha_k <= alpha_max``.

    The first entry (alpha = 0) is the maximum likelihood estimate.  ``monitor``
    is called as ``monitor(alpha, vartheta)`` after every inner iteration.
    """
    if grid_K < 1:
        raise DomainError(f"grid_K must be at least 1, got {grid_K}")
    if not xi > 0:
        raise DomainError(f"xi must be positive, got {xi}")
    theta0 = mle(sample)
    x, y = sample.xs, sample.ys
    start = ReparamTheta.from_theta(theta0, 0.0).as_array()
    traces = [_make_trace(sample, 0.0, start, np.ones(sample.n), 0, True, False)]
    k_max = int(math.floor(alpha_max * grid_K + 1e-9))
    for k in range(1, k_max + 1):
        alpha = k / grid_K
        vt, w, it, ok, cl = _irm_inner(x, y, start, alpha, xi, max_inner, monitor)
        traces.append(_make_trace(sample, alpha, vt, w, it, ok, cl))
        start = vt
    return traces


def fit_alphas(sample: PairedSample, alphas, grid_K: int = DEFAULT_GRID_K,
               xi: float = DEFAULT_XI, max_inner: int = DEFAULT_MAX_INNER) -> list[EstimateTrace]:
    """Fits at arbitrary tuning parameters, in the order requested.

    Grid points are taken from the warm-started chain; any other ``alpha`` is
    finished with one inner loop started from the largest grid point below it.
    """
    alphas = [float(a) for a in alphas]
    if any(not a >= 0 for a in alphas):
        raise DomainError(f"alphas must be nonnegative, got {alphas}")
    chain = irm_fit(sample, grid_K, xi, max_inner, alpha_max=max(alphas))
    out = []
    for a in alphas:
        pos = a * grid_K
        k = int(round(pos))
        if abs(pos - k) < 1e-9 and k < len(chain):
            out.append(chain[k])
            continue
        base = chain[min(int(math.floor(pos)), len(chain) - 1)]
        vt, w, it, ok, cl = _irm_inner(sample.xs, sample.ys, base.vartheta_hat.as_array(),
                                       a, xi, max_inner)
        out.append(_make_trace(sample, a, vt, w, it, ok, cl))
    return out


def fit(sample: PairedSample, alpha: float, **kwargs) -> EstimateTrace:
    return fit_alphas(sample, [alpha], **kwargs)[0]


def eq_residual(sample: PairedSample, theta: Theta, alpha: float) -> float:
    """Norm of the averaged weighted estimating equations at ``theta``."""
    x, y = sample.xs, sample.ys
    wa = np.exp(-0.5 * alpha * model.mahalanobis(theta, x, y))
    u = model.score(theta, x, y)
    total = wa @ (u - model.c_vector(theta, alpha))
    return float(np.linalg.norm(total) / sample.n)


def objective(sample: PairedSample, theta: Theta, alpha: float) -> float:
    """Empirical objective maximized by the estimator.

    ``sum_i kappa_alpha^(-alpha/(alpha+1)) f_theta(X_i, Y_i)^alpha`` for
    ``alpha > 0`` and the log-likelihood for ``alpha = 0``.
    """
    x, y = sample.xs, sample.ys
    if alpha == 0:
        return float(np.sum(-0.5 * model.mahalanobis(theta, x, y)) - sample.n * math.log(model.normalizer(theta)))
    scale = model.kappa(theta, alpha) ** (-alpha / (alpha + 1.0))
    return float(scale * np.sum(model.density(theta, x, y) ** alpha))
