"""Wald-type tests built on the robust estimator, and classic baselines.

For a null hypothesis ``m(theta) = 0`` with ``r`` restrictions and Jacobian
``M = dm'/dtheta`` (5 x r) the statistic is

    W = n m(t)' [M(t)' V_alpha(t) M(t)]^-1 m(t),     t = theta_hat_alpha,

asymptotically chi-square with ``r`` degrees of freedom.  The ``stat_*``
functions give the closed forms for the common hypotheses as functions of a
parameter point and the sample size; the ``case_*`` functions fit the sample
and wrap the result in a :class:`TestResult`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import estimator, model
from .errors import ConditioningError, ConstraintError, DomainError
from .estimator import PairedSample
from .model import Theta
from .statfns import DistRef, chi2_sf, norm_sf, t_sf

SIDES = ("two", "greater", "less")


class ConditioningWarning(RuntimeWarning):
    """A statistic was evaluated at a numerically degenerate point."""


@dataclass(frozen=True)
class Constraint:
    """Null hypothesis ``m(theta) = 0`` with ``r`` restrictions and 5 x r Jacobian ``M``."""

    r: int
    m_eval: Callable[[Theta], np.ndarray]
    M_eval: Callable[[Theta], np.ndarray]
    name: str = "custom"


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    dist: DistRef
    p_value: float
    reject_at_level: bool
    level: float
    alpha: float | None = None
    theta_used: Theta | None = None
    sided: str = "two"
    details: dict = field(default_factory=dict)

    @property
    def df(self) -> float | None:
        return self.dist.df


# ---------------------------------------------------------------------------
# constraints


def _vec(*values) -> np.ndarray:
    return np.array(values, dtype=float)


def _jac(*columns) -> np.ndarray:
    return np.column_stack([np.asarray(c, dtype=float) for c in columns])


def constraint_means() -> Constraint:
    return Constraint(1, lambda t: _vec(t.mu1 - t.mu2),
                      lambda t: _jac([1, -1, 0, 0, 0]), "means")


def constraint_variances() -> Constraint:
    return Constraint(1, lambda t: _vec(t.sigma1 - t.sigma2),
                      lambda t: _jac([0, 0, 1, -1, 0]), "variances")


def constraint_correlation(rho0: float) -> Constraint:
    return Constraint(1, lambda t: _vec(t.rho - rho0),
                      lambda t: _jac([0, 0, 0, 0, 1]), "correlation")


def constraint_means_and_variances() -> Constraint:
    return Constraint(2, lambda t: _vec(t.mu1 - t.mu2, t.sigma1 - t.sigma2),
                      lambda t: _jac([1, -1, 0, 0, 0], [0, 0, 1, -1, 0]), "means_and_variances")


def constraint_covariance(sigma12_0: float) -> Constraint:
    return Constraint(
        1,
        lambda t: _vec(t.sigma1 * t.sigma2 * t.rho - sigma12_0),
        lambda t: _jac([0, 0, t.sigma2 * t.rho, t.sigma1 * t.rho, t.sigma1 * t.sigma2]),
        "covariance",
    )


def constraint_fixed_means(mu1_0: float, mu2_0: float) -> Constraint:
    return Constraint(2, lambda t: _vec(t.mu1 - mu1_0, t.mu2 - mu2_0),
                      lambda t: _jac([1, 0, 0, 0, 0], [0, 1, 0, 0, 0]), "fixed_means")


def constraint_var_cov(sigma1_0: float, sigma2_0: float, sigma12_0: float) -> Constraint:
    return Constraint(
        3,
        lambda t: _vec(t.sigma1 - sigma1_0, t.sigma2 - sigma2_0,
                       t.sigma1 * t.sigma2 * t.rho - sigma12_0),
        lambda t: _jac([0, 0, 1, 0, 0], [0, 0, 0, 1, 0],
                       [0, 0, t.sigma2 * t.rho, t.sigma1 * t.rho, t.sigma1 * t.sigma2]),
        "var_cov",
    )


def restriction_quadratic(theta: Theta, alpha: float, constraint: Constraint):
    """Return ``(m, M, (M' V M)^-1)`` at ``theta``; shared by tests and influence."""
    m = np.atleast_1d(np.asarray(constraint.m_eval(theta), dtype=float))
    M = np.asarray(constraint.M_eval(theta), dtype=float).reshape(5, -1)
    r = constraint.r
    if m.shape != (r,) or M.shape != (5, r):
        raise ConstraintError(f"constraint {constraint.name!r} returned m{m.shape}, M{M.shape} for r={r}")
    if np.linalg.matrix_rank(M) < r:
        raise ConstraintError(f"constraint {constraint.name!r} is rank deficient at {theta}")
    V = model.blocks(theta, alpha).V
    inner = M.T @ V @ M
    if np.linalg.cond(inner) > 1e14:
        raise ConditioningError(f"M'VM is numerically singular for {constraint.name!r}")
    return m, M, np.linalg.inv(inner)


def wald_statistic(theta: Theta, n: int, alpha: float, constraint: Constraint) -> float:
    m, _, inner_inv = restriction_quadratic(theta, alpha, constraint)
    return float(n * m @ inner_inv @ m)


# ---------------------------------------------------------------------------
# closed forms


def _ab(alpha: float):
    return 2.0 * alpha + 1.0, alpha + 1.0


def stat_means(theta: Theta, n: int, alpha: float) -> float:
    b, a = _ab(alpha)
    s1, s2, r = theta.sigma1, theta.sigma2, theta.rho
    var_v = (s1 - s2) ** 2 + 2.0 * (1.0 - r) * s1 * s2
    return n * b**2 / a**4 * (theta.mu1 - theta.mu2) ** 2 / var_v


def beta_variances(theta: Theta, alpha: float) -> float:
    t = alpha / (alpha + 1.0)
    s1, s2, r = theta.sigma1, theta.sigma2, theta.rho
    return (0.25 * t * t + 0.5) * (s1 - s2) ** 2 + (1.0 - r * r) * s1 * s2


def beta_ratio(gamma: float, rho: float, alpha: float) -> float:
    """Variance-test denominator written with ``gamma = sigma1 / sigma2``."""
    t = alpha / (alpha + 1.0)
    return 0.25 * (t * t + 2.0) * (gamma - 1.0) ** 2 + (1.0 - rho * rho) * gamma


def stat_variances(theta: Theta, n: int, alpha: float) -> float:
    b, a = _ab(alpha)
    return n * b**3 / a**6 * (theta.sigma1 - theta.sigma2) ** 2 / beta_variances(theta, alpha)


def stat_variances_ratio(gamma: float, rho: float, n: int, alpha: float) -> float:
    b, a = _ab(alpha)
    return n * b**3 / a**6 * (gamma - 1.0) ** 2 / beta_ratio(gamma, rho, alpha)


def stat_correlation(theta: Theta, n: int, alpha: float, rho0: float) -> float:
    b, a = _ab(alpha)
    return n * b**3 / a**6 * (theta.rho - rho0) ** 2 / (1.0 - theta.rho**2) ** 2


def stat_correlation_modified(rho_hat: float, n: int, alpha: float, rho0: float) -> float:
    """Correlation statistic with the variance evaluated at the null value."""
    b, a = _ab(alpha)
    return n * b**3 / a**6 * (rho_hat - rho0) ** 2 / (1.0 - rho0**2) ** 2


def stat_rao(rho_hat: float, n: int, rho0: float) -> float:
    return n * (rho_hat - rho0) ** 2 / (1.0 - rho0 * rho_hat) ** 2


def stat_means_and_variances(theta: Theta, n: int, alpha: float) -> float:
    b, a = _ab(alpha)
    s1, s2, r = theta.sigma1, theta.sigma2, theta.rho
    var_v = (s1 - s2) ** 2 + 2.0 * (1.0 - r) * s1 * s2
    means_term = (theta.mu1 - theta.mu2) ** 2 / var_v
    var_term = b * (s1 - s2) ** 2 / (a**2 * beta_variances(theta, alpha))
    return n * b**2 / a**4 * (means_term + var_term)


def stat_covariance(theta: Theta, n: int, alpha: float, sigma12_0: float) -> float:
    b, a = _ab(alpha)
    s1, s2, r = theta.sigma1, theta.sigma2, theta.rho
    denom = s1**2 * s2**2 * (a**2 * (r * r + 1.0) + alpha**2 * r * r)
    return n * b**3 / a**4 * (s1 * s2 * r - sigma12_0) ** 2 / denom


def stat_fixed_means(theta: Theta, n: int, alpha: float, mu1_0: float, mu2_0: float) -> float:
    b, a = _ab(alpha)
    za = (theta.mu1 - mu1_0) / theta.sigma1
    zb = (theta.mu2 - mu2_0) / theta.sigma2
    r = theta.rho
    return n * b**2 / a**4 * (za * za - 2.0 * r * za * zb + zb * zb) / (1.0 - r * r)


def var_cov_vector(theta: Theta, sigma1_0: float, sigma2_0: float, sigma12_0: float) -> np.ndarray:
    q1 = sigma1_0 / theta.sigma1
    q2 = sigma2_0 / theta.sigma2
    r = theta.rho
    return np.array([
        1.0 - q1,
        1.0 - q2,
        r - sigma12_0 / (theta.sigma1 * theta.sigma2) - r * (2.0 - q1 - q2),
    ])


def stat_var_cov(theta: Theta, n: int, alpha: float, sigma1_0: float, sigma2_0: float,
                 sigma12_0: float) -> float:
    b, a = _ab(alpha)
    w = var_cov_vector(theta, sigma1_0, sigma2_0, sigma12_0)
    return n * b**3 / a**4 * float(w @ model.v2_alpha_inv(theta.rho, alpha) @ w)


# ---------------------------------------------------------------------------
# result assembly


def _check_level(level: float):
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")


def _chi2_result(name, stat, r, level, alpha, theta, **details) -> TestResult:
    _check_level(level)
    p = 0.0 if math.isinf(stat) else chi2_sf(stat, r)
    return TestResult(name, float(stat), DistRef("chi-square", float(r)), p, p < level,
                      level, alpha, theta, "two", details)


def _sided_p(stat: float, sf, sided: str) -> float:
    if sided == "greater":
        return sf(stat)
    if sided == "less":
        return sf(-stat)
    if sided == "two":
        return min(1.0, 2.0 * sf(abs(stat)))
    raise DomainError(f"sided must be one of {SIDES}, got {sided!r}")


def _fit(sample: PairedSample, alpha: float, fit_options):
    trace = estimator.fit(sample, alpha, **(fit_options or {}))
    if not trace.converged:
        warnings.warn(f"estimator did not converge at alpha={alpha}", ConditioningWarning, stacklevel=3)
    return trace


# ---------------------------------------------------------------------------
# tests on samples


def wald_general(sample: PairedSample, alpha: float, constraint: Constraint,
                 level: float = 0.05, fit_options=None) -> TestResult:
    trace = _fit(sample, alpha, fit_options)
    theta = trace.theta_hat
    stat = wald_statistic(theta, sample.n, alpha, constraint)
    return _chi2_result(constraint.name, stat, constraint.r, level, alpha, theta,
                        converged=trace.converged)


def case_means(sample, alpha, level=0.05, fit_options=None) -> TestResult:
    trace = _fit(sample, alpha, fit_options)
    th = trace.theta_hat
    return _chi2_result("means", stat_means(th, sample.n, alpha), 1, level, alpha, th,
                        converged=trace.converged)


def case_variances(sample, alpha, level=0.05, fit_options=None) -> TestResult:
    trace = _fit(sample, alpha, fit_options)
    th = trace.theta_hat
    gamma = th.sigma1 / th.sigma2
    stat = stat_variances_ratio(gamma, th.rho, sample.n, alpha)
    return _chi2_result("variances", stat, 1, level, alpha, th, gamma=gamma,
                        converged=trace.converged)


def _correlation_result(name, stat_fn, sample, alpha, rho0, level, fit_options):
    if not abs(rho0) < 1:
        raise DomainError(f"rho0 must lie in (-1, 1), got {rho0}")
    trace = _fit(sample, alpha, fit_options)
    th = trace.theta_hat
    if trace.rho_clamped or abs(th.rho) >= estimator.RHO_CLAMP:
        warnings.warn("estimated correlation sits at the clamp boundary; statistic is infinite",
                      ConditioningWarning, stacklevel=3)
        stat = math.inf
    else:
        stat = stat_fn(th)
    return _chi2_result(name, stat, 1, level, alpha, th, converged=trace.converged)


def case_correlation(sample, alpha, rho0=0.0, level=0.05, fit_options=None) -> TestResult:
    return _correlation_result(
        "correlation", lambda th: stat_correlation(th, sample.n, alpha, rho0),
        sample, alpha, rho0, level, fit_options)


def modified_wprime(sample, alpha, rho0=0.0, level=0.05, fit_options=None) -> TestResult:
    return _correlation_result(
        "modified_wprime", lambda th: stat_correlation_modified(th.rho, sample.n, alpha, rho0),
        sample, alpha, rho0, level, fit_options)


def classic_rao(sample, rho0=0.0, level=0.05) -> TestResult:
    return _correlation_result(
        "classic_rao", lambda th: stat_rao(th.rho, sample.n, rho0),
        sample, 0.0, rho0, level, None)


def case_means_and_variances(sample, alpha, level=0.05, fit_options=None) -> TestResult:
    trace = _fit(sample, alpha, fit_options)
    th = trace.theta_hat
    return _chi2_result("means_and_variances", stat_means_and_variances(th, sample.n, alpha),
                        2, level, alpha, th, converged=trace.converged)


def case_covariance(sample, alpha, sigma12_0, level=0.05, fit_options=None) -> TestResult:
    trace = _fit(sample, alpha, fit_options)
    th = trace.theta_hat
    return _chi2_result("covariance", stat_covariance(th, sample.n, alpha, sigma12_0),
                        1, level, alpha, th, converged=trace.converged)


def case_fixed_means(sample, alpha, mu1_0, mu2_0, level=0.05, fit_options=None) -> TestResult:
    trace = _fit(sample, alpha, fit_options)
    th = trace.theta_hat
    return _chi2_result("fixed_means", stat_fixed_means(th, sample.n, alpha, mu1_0, mu2_0),
                        2, level, alpha, th, converged=trace.converged)


def case_var_cov(sample, alpha, sigma1_0, sigma2_0, sigma12_0, level=0.05,
                 fit_options=None) -> TestResult:
    trace = _fit(sample, alpha, fit_options)
    th = trace.theta_hat
    stat = stat_var_cov(th, sample.n, alpha, sigma1_0, sigma2_0, sigma12_0)
    return _chi2_result("var_cov", stat, 3, level, alpha, th, converged=trace.converged)


def sim_w1(sample, alpha, level=0.05, fit_options=None) -> TestResult:
    """Equal-variance test in ratio form; an alias of :func:`case_variances`."""
    return case_variances(sample, alpha, level, fit_options)


def sim_w2(sample, alpha, level=0.05, fit_options=None) -> TestResult:
    """Equal-variance test as zero correlation between X + Y and X - Y."""
    res = modified_wprime(sample.uv(), alpha, 0.0, level, fit_options)
    return TestResult("sim_w2", res.statistic, res.dist, res.p_value, res.reject_at_level,
                      level, alpha, res.theta_used, "two", res.details)


# ---------------------------------------------------------------------------
# exact classic tests


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx <= 0 or syy <= 0:
        raise estimator.DegenerateSampleError("zero variance in correlation")
    return float(np.dot(dx, dy) / math.sqrt(sxx * syy))


def correlation_t(sample: PairedSample, sided: str = "two", level: float = 0.05,
                  name: str = "correlation_t") -> TestResult:
    """Exact test of zero correlation: ``r sqrt((n - 2) / (1 - r^2))`` against Student t(n - 2)."""
    _check_level(level)
    n = sample.n
    if n < 4:
        raise estimator.DegenerateSampleError(f"correlation t-test needs n >= 4, got {n}")
    r = _pearson(sample.xs, sample.ys)
    stat = r * math.sqrt((n - 2) / (1.0 - r * r))
    df = n - 2
    p = _sided_p(stat, lambda s: t_sf(s, df), sided)
    return TestResult(name, stat, DistRef("student-t", float(df)), p, p < level,
                      level, None, None, sided, {"r": r})


def morgan_pitman(sample: PairedSample, sided: str = "two", level: float = 0.05) -> TestResult:
    """Exact equal-variance test via the correlation of X + Y and X - Y."""
    res = correlation_t(sample.uv(), sided, level, "morgan_pitman")
    return TestResult(res.name, res.statistic, res.dist, res.p_value, res.reject_at_level,
                      level, None, None, sided, {"r_uv": res.details["r"]})


def paired_t(sample: PairedSample, sided: str = "two", level: float = 0.05) -> TestResult:
    _check_level(level)
    n = sample.n
    v = sample.xs - sample.ys
    sd = float(np.std(v, ddof=1))
    if sd <= 0:
        raise estimator.DegenerateSampleError("paired differences are constant")
    stat = math.sqrt(n) * float(v.mean()) / sd
    df = n - 1
    p = _sided_p(stat, lambda s: t_sf(s, df), sided)
    return TestResult("paired_t", stat, DistRef("student-t", float(df)), p, p < level,
                      level, None, None, sided, {"mean_diff": float(v.mean()), "sd_diff": sd})


# ---------------------------------------------------------------------------
# signed-root forms


def z_variances(theta: Theta, n: int, alpha: float) -> float:
    gamma = theta.sigma1 / theta.sigma2
    return math.copysign(math.sqrt(stat_variances_ratio(gamma, theta.rho, n, alpha)), gamma - 1.0)


def z_uv(rho_uv: float, n: int, alpha: float) -> float:
    b, a = _ab(alpha)
    return math.sqrt(n) * (math.sqrt(b) / a) ** 3 * rho_uv


def z_means(theta: Theta, n: int, alpha: float) -> float:
    b, a = _ab(alpha)
    s1, s2, r = theta.sigma1, theta.sigma2, theta.rho
    sd_v = math.sqrt(s1 * s1 + s2 * s2 - 2.0 * r * s1 * s2)
    return math.sqrt(n) * b / a**2 * (theta.mu1 - theta.mu2) / sd_v


def z_forms(sample: PairedSample, alpha: float, which: str, sided: str = "two",
            level: float = 0.05, fit_options=None) -> TestResult:
    _check_level(level)
    if which == "z_variances":
        th = _fit(sample, alpha, fit_options).theta_hat
        stat = z_variances(th, sample.n, alpha)
    elif which == "z_uv":
        th = _fit(sample.uv(), alpha, fit_options).theta_hat
        stat = z_uv(th.rho, sample.n, alpha)
    elif which == "z_means":
        th = _fit(sample, alpha, fit_options).theta_hat
        stat = z_means(th, sample.n, alpha)
    else:
        raise DomainError(f"unknown z form {which!r}")
    p = _sided_p(stat, norm_sf, sided)
    return TestResult(which, stat, DistRef("standard-normal"), p, p < level, level, alpha, th, sided)


# ---------------------------------------------------------------------------
# dispatch by name

CASES = (
    "means", "variances", "correlation", "means_and_variances", "covariance", "fixed_means",
    "var_cov", "morgan_pitman", "correlation_t", "paired_t", "classic_rao", "modified_wprime",
    "z_variances", "z_uv", "z_means", "sim_w1", "sim_w2",
)

_SIDED_CASES = ("morgan_pitman", "correlation_t", "paired_t", "z_variances", "z_uv", "z_means")

_REQUIRED = {
    "covariance": ("sigma12_0",),
    "fixed_means": ("mu1_0", "mu2_0"),
    "var_cov": ("sigma1_0", "sigma2_0", "sigma12_0"),
}


def run_test(sample: PairedSample, case: str, alpha: float = 0.0, level: float = 0.05,
             sided: str = "two", rho0: float | None = None, **params) -> TestResult:
    """Run a test by name; raises :class:`ConstraintError` when a parameter is missing."""
    if case not in CASES:
        raise ConstraintError(f"unknown case {case!r}; choose from {', '.join(CASES)}")
    missing = [p for p in _REQUIRED.get(case, ()) if params.get(p) is None]
    if missing:
        raise ConstraintError(f"case {case!r} requires {', '.join(missing)}")
    if sided != "two" and case not in _SIDED_CASES:
        raise ConstraintError(f"case {case!r} is chi-square based and only two-sided")
    r0 = 0.0 if rho0 is None else rho0
    if case == "means":
        return case_means(sample, alpha, level)
    if case in ("variances", "sim_w1"):
        return case_variances(sample, alpha, level)
    if case == "correlation":
        return case_correlation(sample, alpha, r0, level)
    if case == "means_and_variances":
        return case_means_and_variances(sample, alpha, level)
    if case == "covariance":
        return case_covariance(sample, alpha, params["sigma12_0"], level)
    if case == "fixed_means":
        return case_fixed_means(sample, alpha, params["mu1_0"], params["mu2_0"], level)
    if case == "var_cov":
        return case_var_cov(sample, alpha, params["sigma1_0"], params["sigma2_0"],
                            params["sigma12_0"], level)
    if case == "morgan_pitman":
        return morgan_pitman(sample, sided, level)
    if case == "paired_t":
        return paired_t(sample, sided, level)
    if case == "correlation_t":
        return correlation_t(sample, sided, level)
    if case == "classic_rao":
        return classic_rao(sample, r0, level)
    if case == "modified_wprime":
        return modified_wprime(sample, alpha, r0, level)
    if case == "sim_w2":
        return sim_w2(sample, alpha, level)
    return z_forms(sample, alpha, case, sided, level)
