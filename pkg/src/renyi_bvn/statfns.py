"""Reference distributions and reproducible samplers.

The survival functions are computed from the regularized incomplete gamma and
beta functions, each evaluated by its power series or by a modified-Lentz
continued fraction depending on where the argument sits relative to the shape
parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 100_000


@dataclass(frozen=True)
class DistRef:
    """Reference distribution of a test statistic."""

    kind: str  # "chi-square" | "student-t" | "standard-normal"
    df: float | None = None

    def __post_init__(self):
        if self.kind not in ("chi-square", "student-t", "standard-normal"):
            raise DomainError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "standard-normal":
            if self.df is not None:
                raise DomainError("standard normal takes no degrees of freedom")
        elif self.df is None or not self.df > 0:
            raise DomainError(f"{self.kind} needs df > 0, got {self.df}")

    def sf(self, x: float) -> float:
        if self.kind == "chi-square":
            return chi2_sf(x, self.df)
        if self.kind == "student-t":
            return t_sf(x, self.df)
        return norm_sf(x)


# ---------------------------------------------------------------------------
# incomplete gamma


def _gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError(f"gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by continued fraction."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"gamma continued fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x)."""
    if not a > 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0:
        raise DomainError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


# ---------------------------------------------------------------------------
# incomplete beta


def _beta_cf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"beta continued fraction did not converge (a={a}, b={b}, x={x})")
    return h


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``y`` may carry ``1 - x`` computed without cancellation by the caller.
    """
    if y is None:
        y = 1.0 - x
    if not (a > 0 and b > 0):
        raise DomainError(f"shapes must be positive, got a={a}, b={b}")
    if x < 0 or y < 0:
        raise DomainError(f"argument must lie in [0, 1], got x={x}")
    if x == 0:
        return 0.0
    if y == 0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(y)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, y) / b


# ---------------------------------------------------------------------------
# survival functions


def chi2_sf(x: float, r: float) -> float:
    """P(chi2_r > x)."""
    if not r > 0:
        raise DomainError(f"degrees of freedom must be positive, got {r}")
    if x < 0:
        raise DomainError(f"chi-square argument must be nonnegative, got {x}")
    return gammaincc(0.5 * r, 0.5 * x)


def chi2_isf(p: float, r: float) -> float:
    """Upper quantile: the x with chi2_sf(x, r) = p."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    lo, hi = 0.0, max(1.0, 2.0 * r)
    while chi2_sf(hi, r) > p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_sf(mid, r) > p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


def t_sf(x: float, df: float) -> float:
    """P(T_df > x) for Student's t."""
    if not df > 0:
        raise DomainError(f"degrees of freedom must be positive, got {df}")
    if x == 0:
        return 0.5
    if math.isinf(x):
        return 0.0 if x > 0 else 1.0
    x2 = x * x
    # two-sided tail P(|T| > |x|) = I_{df/(df+x^2)}(df/2, 1/2)
    tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + x2), x2 / (df + x2))
    return tail if x > 0 else 1.0 - tail


def norm_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# random streams and samplers


@dataclass(frozen=True)
class RngStream:
    """Independent random stream keyed by ``(base_seed, stream_index)``."""

    base_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= self.base_seed < 2**64:
            raise DomainError("base_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise DomainError("stream_index must be nonnegative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.base_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.PCG64(seq))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def _cholesky_rows(theta):
    s1, s2, rho = theta.sigma1, theta.sigma2, theta.rho
    return s1, rho * s2, s2 * math.sqrt(1.0 - rho * rho)


def sample_bvn(theta, n: int, rng) -> np.ndarray:
    """Draw ``n`` pairs from the bivariate normal ``theta``; returns an (n, 2) array."""
    z = _as_generator(rng).standard_normal((n, 2))
    l11, l21, l22 = _cholesky_rows(theta)
    out = np.empty((n, 2))
    out[:, 0] = theta.mu1 + l11 * z[:, 0]
    out[:, 1] = theta.mu2 + l21 * z[:, 0] + l22 * z[:, 1]
    return out


def sample_bvt(theta, df: float, n: int, rng) -> np.ndarray:
    """Bivariate Student t with location/scale/correlation taken from ``theta``.

    Each pair is ``mu + L z / sqrt(W / df)`` with ``W ~ chi2_df`` drawn per pair.
    """
    if not df > 0:
        raise DomainError(f"degrees of freedom must be positive, got {df}")
    gen = _as_generator(rng)
    z = gen.standard_normal((n, 2))
    w = gen.chisquare(df, n)
    scale = 1.0 / np.sqrt(w / df)
    l11, l21, l22 = _cholesky_rows(theta)
    out = np.empty((n, 2))
    out[:, 0] = theta.mu1 + scale * (l11 * z[:, 0])
    out[:, 1] = theta.mu2 + scale * (l21 * z[:, 0] + l22 * z[:, 1])
    return out
