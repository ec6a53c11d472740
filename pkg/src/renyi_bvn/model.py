"""Bivariate normal model: density, score, and the asymptotic blocks of the
minimum Renyi pseudodistance estimator.

Parameters are always ordered ``(mu1, mu2, sigma1, sigma2, rho)``.  For a
tuning parameter ``alpha`` the estimating function is

    Psi(x; theta) = f_theta(x)**alpha * (u_theta(x) - c_alpha(theta))

and the blocks returned by :func:`blocks` are

    kappa = int f**(alpha+1)           xi = int f**(alpha+1) u = kappa * c
    J     = int f**(alpha+1) u u'      S  = J - kappa c c'
    K     = Var(Psi)                   V  = S^-1 K S^-1

All of them have closed forms for the bivariate normal; the location block
and the scale/correlation block never interact.  :func:`quadrature_blocks`
recomputes the same quantities by adaptive cubature for verification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, DomainError

PARAM_NAMES = ("mu1", "mu2", "sigma1", "sigma2", "rho")
RHO_GUARD = 1.0 - 1e-10


@dataclass(frozen=True)
class Theta:
    """A bivariate normal parameter point."""

    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    rho: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        if not self.sigma1 > 0 or not self.sigma2 > 0:
            raise DomainError(f"scales must be positive, got {self.sigma1}, {self.sigma2}")
        if not abs(self.rho) < 1:
            raise DomainError(f"correlation must lie in (-1, 1), got {self.rho}")

    @classmethod
    def from_array(cls, values) -> "Theta":
        values = np.asarray(values, dtype=float)
        if values.shape != (5,):
            raise DomainError(f"expected 5 parameters, got shape {values.shape}")
        return cls(*values.tolist())

    def as_array(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2, self.sigma1, self.sigma2, self.rho])

    @property
    def cov(self) -> np.ndarray:
        s12 = self.rho * self.sigma1 * self.sigma2
        return np.array([[self.sigma1**2, s12], [s12, self.sigma2**2]])


def normalizer(theta: Theta) -> float:
    """k(theta) = 2 pi sigma1 sigma2 sqrt(1 - rho^2), so that f = exp(-d2/2) / k."""
    return 2.0 * math.pi * theta.sigma1 * theta.sigma2 * math.sqrt(1.0 - theta.rho**2)


def _standardize(theta: Theta, x, y):
    zx = (np.asarray(x, dtype=float) - theta.mu1) / theta.sigma1
    zy = (np.asarray(y, dtype=float) - theta.mu2) / theta.sigma2
    return zx, zy


def mahalanobis(theta: Theta, x, y):
    """Squared Mahalanobis distance of ``(x, y)`` from the mean."""
    zx, zy = _standardize(theta, x, y)
    r = theta.rho
    return (zx * zx - 2.0 * r * zx * zy + zy * zy) / (1.0 - r * r)


def weight(theta: Theta, x, y):
    """w_theta(x, y) = exp(d2 / 2); density = 1 / (k(theta) w)."""
    return np.exp(0.5 * mahalanobis(theta, x, y))


def density(theta: Theta, x, y):
    return np.exp(-0.5 * mahalanobis(theta, x, y)) / normalizer(theta)


def score(theta: Theta, x, y) -> np.ndarray:
    """Score vector; the last axis has length 5."""
    zx, zy = _standardize(theta, x, y)
    r = theta.rho
    q = 1.0 - r * r
    s1, s2 = theta.sigma1, theta.sigma2
    u_mu1 = (zx - r * zy) / (s1 * q)
    u_mu2 = (zy - r * zx) / (s2 * q)
    u_s1 = (zx * zx - r * zx * zy) / (s1 * q) - 1.0 / s1
    u_s2 = (zy * zy - r * zx * zy) / (s2 * q) - 1.0 / s2
    quad = zx * zx - 2.0 * r * zx * zy + zy * zy
    u_rho = r / q + zx * zy / q - r * quad / (q * q)
    return np.stack(np.broadcast_arrays(u_mu1, u_mu2, u_s1, u_s2, u_rho), axis=-1)


# ---------------------------------------------------------------------------
# correlation-only building blocks (matrices of rho, or rho and alpha)


def j1(rho: float) -> np.ndarray:
    return np.array([[1.0, -rho], [-rho, 1.0]]) / (1.0 - rho * rho)


def j1_inv(rho: float) -> np.ndarray:
    return np.array([[1.0, rho], [rho, 1.0]])


def j2_alpha(rho: float, alpha: float) -> np.ndarray:
    q = 1.0 - rho * rho
    a2 = alpha * alpha
    off = a2 - rho * rho * (a2 + 1.0)
    diag = off + 2.0
    cr = -rho * (a2 + 1.0)
    rr = (rho * rho * (a2 + 1.0) + 1.0) / q
    return np.array([[diag, off, cr], [off, diag, cr], [cr, cr, rr]]) / q


def s21(rho: float) -> np.ndarray:
    q = 1.0 - rho * rho
    r2 = rho * rho
    return np.array([
        [2.0 - r2, -r2, -rho],
        [-r2, 2.0 - r2, -rho],
        [-rho, -rho, (1.0 + r2) / q],
    ]) / q


def s22(rho: float) -> np.ndarray:
    q = 1.0 - rho * rho
    return np.array([
        [q, q, -rho],
        [q, q, -rho],
        [-rho, -rho, rho * rho / q],
    ]) / q


def s21_inv(rho: float) -> np.ndarray:
    q = 1.0 - rho * rho
    r2 = rho * rho
    rq = rho * q
    return 0.5 * np.array([
        [1.0, r2, rq],
        [r2, 1.0, rq],
        [rq, rq, 2.0 * q * q],
    ])


def k2_alpha(rho: float, alpha: float) -> np.ndarray:
    return (alpha + 1.0) ** 2 * s21(rho) + alpha**2 * s22(rho)


def v2_alpha(rho: float, alpha: float) -> np.ndarray:
    """Scale/correlation part of V before the D2 rescaling and constant factor."""
    si = s21_inv(rho)
    return (alpha + 1.0) ** 2 * si + alpha**2 * si @ s22(rho) @ si


def v2_alpha_inv(rho: float, alpha: float) -> np.ndarray:
    """Inverse of :func:`v2_alpha` in the factored form S21 [S21 + t^2 S22]^-1 S21 / (alpha+1)^2."""
    t = alpha / (alpha + 1.0)
    a = s21(rho)
    return a @ np.linalg.solve(a + t * t * s22(rho), a) / (alpha + 1.0) ** 2


# ---------------------------------------------------------------------------
# assembled blocks


@dataclass(frozen=True)
class ModelBlocks:
    alpha: float
    kappa: float
    c: np.ndarray
    J: np.ndarray
    S: np.ndarray
    K: np.ndarray
    V: np.ndarray
    S_inv: np.ndarray

    @property
    def xi(self) -> np.ndarray:
        return self.kappa * self.c


def _assemble(top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    out = np.zeros((5, 5))
    out[:2, :2] = top
    out[2:, 2:] = bottom
    return out


def kappa(theta: Theta, alpha: float) -> float:
    return normalizer(theta) ** (-alpha) / (alpha + 1.0)


def c_vector(theta: Theta, alpha: float) -> np.ndarray:
    t = alpha / (alpha + 1.0)
    r = theta.rho
    return np.array([0.0, 0.0, -t / theta.sigma1, -t / theta.sigma2, t * r / (1.0 - r * r)])


def blocks(theta: Theta, alpha: float) -> ModelBlocks:
    """Closed-form kappa, c, J, S, K, V (and S^-1) at ``(theta, alpha)``."""
    if not alpha >= 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    r = theta.rho
    if abs(r) > RHO_GUARD:
        raise ConditioningError(f"|rho| = {abs(r)} too close to 1; S is numerically singular")
    a1 = alpha + 1.0
    a2 = 2.0 * alpha + 1.0
    kk = normalizer(theta)
    ka = kk**alpha
    d1 = np.array([theta.sigma1, theta.sigma2])
    d2 = np.array([theta.sigma1, theta.sigma2, 1.0])
    inv1 = np.outer(1.0 / d1, 1.0 / d1)
    inv2 = np.outer(1.0 / d2, 1.0 / d2)
    out1 = np.outer(d1, d1)
    out2 = np.outer(d2, d2)

    J1 = inv1 * j1(r) / (ka * a1**2)
    J2 = inv2 * j2_alpha(r, alpha) / (ka * a1**3)
    S2 = inv2 * s21(r) / (ka * a1**3)
    K1 = inv1 * j1(r) / (kk ** (2 * alpha) * a2**2)
    K2 = inv2 * k2_alpha(r, alpha) / (kk ** (2 * alpha) * a2**3 * a1**2)
    V1 = a1**4 / a2**2 * out1 * j1_inv(r)
    V2 = a1**4 / a2**3 * out2 * v2_alpha(r, alpha)
    Si1 = ka * a1**2 * out1 * j1_inv(r)
    Si2 = ka * a1**3 * out2 * s21_inv(r)

    return ModelBlocks(
        alpha=float(alpha),
        kappa=kappa(theta, alpha),
        c=c_vector(theta, alpha),
        J=_assemble(J1, J2),
        S=_assemble(J1, S2),
        K=_assemble(K1, K2),
        V=_assemble(V1, V2),
        S_inv=_assemble(Si1, Si2),
    )


# ---------------------------------------------------------------------------
# quadrature oracle

# Kronrod 15-point nodes (nonnegative half) and weights; Gauss 7-point weights
# sit on the odd-indexed Kronrod nodes.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES_15 = np.concatenate([-_XGK[:-1], _XGK[::-1]])
WEIGHTS_15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
WEIGHTS_7 = np.zeros(15)
WEIGHTS_7[1:7:2] = _WG[:3]
WEIGHTS_7[7] = _WG[3]
WEIGHTS_7[9:15:2] = _WG[2::-1]


def gk2d(fun, lower, upper, rtol=1e-13, atol=0.0, initial=4, max_cells=4096):
    """Adaptive tensor-product Gauss-Kronrod (7, 15) cubature over a rectangle.

    ``fun(x, y)`` receives flat arrays and returns an ``(m, p)`` array, so a
    whole vector of integrands is handled in one pass.  Cells are split into
    quarters while the global error estimate exceeds ``max(atol, rtol * |I|)``
    (componentwise maximum norm).

    Returns ``(integral, error_estimate)``, both of shape ``(p,)``.
    """
    (ax, ay), (bx, by) = lower, upper
    ex = np.linspace(ax, bx, initial + 1)
    ey = np.linspace(ay, by, initial + 1)
    gx, gy = np.meshgrid(ex[:-1], ey[:-1], indexing="ij")
    cells = np.column_stack([gx.ravel(), gy.ravel(),
                             np.full(gx.size, (bx - ax) / initial),
                             np.full(gx.size, (by - ay) / initial)])

    wk = np.outer(WEIGHTS_15, WEIGHTS_15).ravel()
    wg = np.outer(WEIGHTS_7, WEIGHTS_7).ravel()
    nx, ny = np.meshgrid(NODES_15, NODES_15, indexing="ij")
    nx, ny = nx.ravel(), ny.ravel()

    def evaluate(cells, chunk=256):
        if len(cells) > chunk:
            parts = [evaluate(cells[i:i + chunk]) for i in range(0, len(cells), chunk)]
            return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
        hx, hy = 0.5 * cells[:, 2], 0.5 * cells[:, 3]
        cx, cy = cells[:, 0] + hx, cells[:, 1] + hy
        px = (cx[:, None] + hx[:, None] * nx[None, :]).ravel()
        py = (cy[:, None] + hy[:, None] * ny[None, :]).ravel()
        vals = np.asarray(fun(px, py), dtype=float)
        vals = vals.reshape(len(cells), nx.size, -1)
        area = (hx * hy)[:, None]
        ik = np.einsum("q,cqp->cp", wk, vals) * area
        ig = np.einsum("q,cqp->cp", wg, vals) * area
        return ik, np.abs(ik - ig).max(axis=1)

    done_sum = 0.0
    done_err = 0.0
    est, err = evaluate(cells)
    while True:
        total = done_sum + est.sum(axis=0)
        total_err = done_err + err.sum()
        target = max(atol, rtol * np.abs(total).max())
        if total_err <= target:
            break
        # split cells whose error is not negligible; retire the rest
        keep = err > target / (4.0 * len(err))
        if not keep.any() or 4 * keep.sum() > max_cells:
            break
        done_sum = done_sum + est[~keep].sum(axis=0)
        done_err += err[~keep].sum()
        parents = cells[keep]
        hx, hy = 0.5 * parents[:, 2], 0.5 * parents[:, 3]
        kids = []
        for ox, oy in ((0, 0), (1, 0), (0, 1), (1, 1)):
            kids.append(np.column_stack([parents[:, 0] + ox * hx, parents[:, 1] + oy * hy, hx, hy]))
        cells = np.concatenate(kids)
        est, err = evaluate(cells)
    return done_sum + est.sum(axis=0), np.full(est.shape[1], total_err)


def _whitened_integral(theta: Theta, integrand, half_width=12.0, rtol=1e-11):
    """Integrate ``integrand(x, y)`` over R^2 in coordinates whitened by ``theta``."""
    L = np.linalg.cholesky(theta.cov)
    det = L[0, 0] * L[1, 1]

    def fun(z1, z2):
        x = theta.mu1 + L[0, 0] * z1
        y = theta.mu2 + L[1, 0] * z1 + L[1, 1] * z2
        return integrand(x, y) * det

    return gk2d(fun, (-half_width, -half_width), (half_width, half_width), rtol=rtol)[0]


def quadrature_blocks(theta: Theta, alpha: float, step: float = 1e-5, half_width: float = 12.0):
    """Recompute kappa, c, J, S, K by cubature of their defining integrals.

    S is obtained from its definition as minus the theta-derivative of the
    expected estimating function under the model at ``theta``; the inner
    theta-derivatives are central finite differences taken at fixed ``x``.
    Returns a dict of arrays keyed ``kappa, c, J, S, K``.
    """
    p0 = theta.as_array()
    hs = step * np.maximum(1.0, np.abs(p0))
    # keep the perturbed correlation valid
    hs[4] = min(hs[4], 0.5 * (1.0 - abs(theta.rho)))
    shifted = []
    for j in range(5):
        plus, minus = p0.copy(), p0.copy()
        plus[j] += hs[j]
        minus[j] -= hs[j]
        shifted.append((Theta.from_array(plus), Theta.from_array(minus)))

    def integrand(x, y):
        f = density(theta, x, y)
        fa = f**alpha
        u = score(theta, x, y)
        m = x.shape[0]
        parts = [
            (f * fa)[:, None],                                   # kappa
            (f * fa)[:, None] * u,                               # xi
            ((f * fa)[:, None, None] * u[:, :, None] * u[:, None, :]).reshape(m, 25),  # J
        ]
        dfu = np.empty((m, 5, 5))   # d/dtheta_j of f^alpha u_i  -> [:, i, j]
        dfa = np.empty((m, 5))      # d/dtheta_j of f^alpha
        dfk = np.empty((m, 5))      # d/dtheta_j of f^(alpha+1)
        dfxi = np.empty((m, 5, 5))  # d/dtheta_j of f^(alpha+1) u_i
        for j, (tp, tm) in enumerate(shifted):
            fp, fm = density(tp, x, y), density(tm, x, y)
            up, um = score(tp, x, y), score(tm, x, y)
            fpa, fma = fp**alpha, fm**alpha
            h2 = 2.0 * hs[j]
            dfu[:, :, j] = (fpa[:, None] * up - fma[:, None] * um) / h2
            dfa[:, j] = (fpa - fma) / h2
            dfk[:, j] = (fpa * fp - fma * fm) / h2
            dfxi[:, :, j] = ((fpa * fp)[:, None] * up - (fma * fm)[:, None] * um) / h2
        f2a = f ** (2 * alpha + 1)
        parts += [
            (f[:, None, None] * dfu).reshape(m, 25),             # A
            f[:, None] * dfa,                                    # B
            dfk,                                                 # D kappa
            dfxi.reshape(m, 25),                                 # D xi
            (f2a[:, None, None] * u[:, :, None] * u[:, None, :]).reshape(m, 25),  # P
            f2a[:, None] * u,                                    # xi_2
            f2a[:, None],                                        # kappa_2
        ]
        return np.concatenate(parts, axis=1)

    vals = _whitened_integral(theta, integrand, half_width=half_width, rtol=1e-10)
    idx = np.cumsum([0, 1, 5, 25, 25, 5, 5, 25, 25, 5, 1])
    kap, xi, J, A, B, Dk, Dxi, P, xi2, kap2 = (vals[idx[i]:idx[i + 1]] for i in range(10))
    kap = kap[0]
    kap2 = kap2[0]
    J, A, Dxi, P = (a.reshape(5, 5) for a in (J, A, Dxi, P))
    c = xi / kap
    Dc = (Dxi * kap - np.outer(xi, Dk)) / kap**2
    S = -(A - np.outer(c, B) - kap * Dc)
    K = P - np.outer(xi2, c) - np.outer(c, xi2) + kap2 * np.outer(c, c)
    return {"kappa": kap, "c": c, "J": J, "S": S, "K": K}
