"""Monte Carlo study of level and estimation error under contamination, and
data-driven choice of the tuning parameter.

Each replication ``r`` of a cell draws from ``RngStream(seed, r)``, so the
same replication index sees the same random numbers in every cell and the
report does not depend on how replications are distributed over workers.
"""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimator, model, wald
from .errors import DegenerateSampleError, DomainError
from .estimator import PairedSample
from .model import Theta
from .statfns import RngStream, chi2_sf, sample_bvn, sample_bvt

SCENARIOS = ("pure", "slight", "regular", "heavy")
FRACTIONS = (0.05, 0.10, 0.20)
TESTS = ("simW1", "simW2", "mp")
COUNT_RULES = ("fixed", "binomial")
T_DF = 5.0
SEED_ENV = "RENYI_BVN_SEED"
REPORT_COLUMNS = ("scenario", "fraction", "rho", "alpha", "n", "level", "level_se",
                  "mse", "mse_se", "nonconverged")


@dataclass(frozen=True)
class Scenario:
    kind: str
    contamination_fraction: float = 0.0

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise DomainError(f"unknown scenario {self.kind!r}")
        if self.kind == "pure":
            if self.contamination_fraction != 0:
                raise DomainError("pure scenario has no contamination")
        elif not any(math.isclose(self.contamination_fraction, f) for f in FRACTIONS):
            raise DomainError(f"contamination fraction must be one of {FRACTIONS}")


def base_theta(rho: float) -> Theta:
    return Theta(0.0, 0.0, 1.0, 1.0, rho)


def contaminated_count(fraction: float, n: int) -> int:
    """Half-up rounding of ``fraction * n``."""
    return int(math.floor(fraction * n + 0.5 + 1e-12))


def generate(scenario: Scenario, rho: float, n: int, rng, count_rule: str = "fixed") -> PairedSample:
    """Clean rows first, contaminated rows last; all draws from one generator.

    With ``count_rule="fixed"`` exactly ``round(fraction * n)`` rows are
    contaminated; with ``"binomial"`` each row is contaminated independently
    with probability ``fraction``, i.e. the count is a Binomial(n, fraction) draw.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if count_rule == "fixed":
        m = contaminated_count(scenario.contamination_fraction, n)
    elif count_rule == "binomial":
        m = int(gen.binomial(n, scenario.contamination_fraction)) if scenario.contamination_fraction else 0
    else:
        raise DomainError(f"count_rule must be one of {COUNT_RULES}, got {count_rule!r}")
    clean = sample_bvn(base_theta(rho), n - m, gen)
    if m == 0:
        return PairedSample.from_array(clean)
    if scenario.kind == "slight":
        s3 = math.sqrt(3.0)
        dirty = sample_bvn(Theta(0.0, 0.0, s3, s3, rho), m, gen)
    elif scenario.kind == "regular":
        dirty = sample_bvt(base_theta(rho), T_DF, m, gen)
    else:
        dirty = sample_bvn(Theta(0.0, 0.0, 1.0, 5.0, rho), m, gen)
    return PairedSample.from_array(np.vstack([clean, dirty]))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SimConfig:
    n: int = 25
    replications: int = 5000
    rho_values: tuple = (0.0,)
    alpha_values: tuple = (0.0, 0.2)
    scenarios: tuple = ("pure",)
    fractions: tuple = (0.2,)
    test: str = "simW2"
    level: float = 0.05
    seed: int = 20240101
    contamination_count: str = "fixed"

    def __post_init__(self):
        if self.contamination_count not in COUNT_RULES:
            raise DomainError(f"contamination_count must be one of {COUNT_RULES}")
        if self.n < 4:
            raise DomainError(f"n must be at least 4, got {self.n}")
        if self.replications < 1:
            raise DomainError("replications must be positive")
        if self.test not in TESTS:
            raise DomainError(f"test must be one of {TESTS}, got {self.test!r}")
        if any(not a >= 0 for a in self.alpha_values) or not self.alpha_values:
            raise DomainError("alpha_values must be a nonempty list of nonnegative numbers")
        if any(not abs(r) < 1 for r in self.rho_values) or not self.rho_values:
            raise DomainError("rho_values must lie in (-1, 1)")
        if not 0 < self.level < 1:
            raise DomainError("level must lie in (0, 1)")
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise DomainError(f"unknown scenario {s!r}")
        for f in self.fractions:
            Scenario("heavy", f)

    def cells(self) -> list[Scenario]:
        out = []
        for kind in self.scenarios:
            if kind == "pure":
                out.append(Scenario("pure", 0.0))
            else:
                out.extend(Scenario(kind, f) for f in self.fractions)
        return out


_INT_KEYS = ("n", "replications", "seed")
_FLOAT_LIST_KEYS = ("rho_values", "alpha_values", "fractions")


def parse_config(text: str, environ=None) -> SimConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    The seed is replaced by the ``RENYI_BVN_SEED`` environment variable when set.
    """
    environ = os.environ if environ is None else environ
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SimConfig.__dataclass_fields__:
            raise DomainError(f"config line {lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_LIST_KEYS:
                values[key] = tuple(float(v) for v in value.split(",") if v.strip())
            elif key == "scenarios":
                values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "level":
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise DomainError(f"config line {lineno}: {exc}") from None
    if environ.get(SEED_ENV):
        values["seed"] = int(environ[SEED_ENV])
    return SimConfig(**values)


def load_config(path) -> SimConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# replication engine


@dataclass(frozen=True)
class SimCell:
    scenario: str
    fraction: float
    rho: float
    alpha: float
    n: int
    level: float
    level_se: float
    mse: float
    mse_se: float
    nonconverged: int
    replications: int

    @property
    def flagged(self) -> bool:
        return self.nonconverged > 0.01 * self.replications


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    cells: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for c in self.cells:
            writer.writerow([c.scenario, _fmt(c.fraction), _fmt(c.rho), _fmt(c.alpha), c.n,
                             _fmt(c.level), _fmt(c.level_se), _fmt(c.mse), _fmt(c.mse_se),
                             c.nonconverged])
        return buf.getvalue()

    def cell(self, scenario: str, fraction: float, rho: float, alpha: float) -> SimCell:
        for c in self.cells:
            if (c.scenario == scenario and math.isclose(c.fraction, fraction)
                    and math.isclose(c.rho, rho) and math.isclose(c.alpha, alpha)):
                return c
        raise KeyError((scenario, fraction, rho, alpha))


def _fmt(v: float) -> str:
    return "%.17g" % v


def replicate(test: str, sample: PairedSample, alphas, level: float):
    """One replication: rows of ``(reject, deviation, ok)`` per alpha."""
    n = sample.n
    if test == "mp":
        try:
            res = wald.morgan_pitman(sample, "two", level)
        except DegenerateSampleError:
            return [(False, math.nan, False)]
        return [(res.p_value < level, abs(res.details["r_uv"]), True)]
    data = sample.uv() if test == "simW2" else sample
    try:
        traces = estimator.fit_alphas(data, alphas)
    except DegenerateSampleError:
        return [(False, math.nan, False)] * len(alphas)
    rows = []
    for a, tr in zip(alphas, traces):
        th = tr.theta_hat
        if test == "simW1":
            gamma = th.sigma1 / th.sigma2
            stat = wald.stat_variances_ratio(gamma, th.rho, n, a)
            dev = abs(gamma - 1.0)
        else:
            stat = (math.inf if tr.rho_clamped
                    else wald.stat_correlation_modified(th.rho, n, a, 0.0))
            dev = abs(th.rho)
        p = 0.0 if math.isinf(stat) else chi2_sf(stat, 1)
        rows.append((p < level, dev, tr.converged))
    return rows


def _run_block(args):
    config, scenario, rho, start, stop = args
    alphas = list(config.alpha_values)
    out = []
    for r in range(start, stop):
        sample = generate(scenario, rho, config.n, RngStream(config.seed, r),
                          config.contamination_count)
        out.append(replicate(config.test, sample, alphas, config.level))
    return out


def _summarize(config, scenario, rho, alpha, rows) -> SimCell:
    reject = np.array([r[0] for r in rows], dtype=float)
    dev = np.array([r[1] for r in rows], dtype=float)
    ok = np.array([r[2] for r in rows], dtype=bool)
    valid = np.isfinite(dev)
    R = int(valid.sum())
    level = float(reject[valid].mean()) if R else math.nan
    mse = float(dev[valid].mean()) if R else math.nan
    mse_se = float(dev[valid].std(ddof=1) / math.sqrt(R)) if R > 1 else math.nan
    return SimCell(scenario.kind, scenario.contamination_fraction, rho, alpha, config.n,
                   level, math.sqrt(level * (1.0 - level) / R) if R else math.nan,
                   mse, mse_se, int((~ok).sum()), len(rows))


def run(config: SimConfig, workers: int = 1, block: int = 250) -> SimReport:
    """Run every (scenario, rho) cell; ``workers > 1`` uses a process pool."""
    jobs = []
    for scenario in config.cells():
        for rho in config.rho_values:
            for start in range(0, config.replications, block):
                jobs.append((config, scenario, rho, start, min(start + block, config.replications)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]

    grouped = {}
    for job, res in zip(jobs, results):
        grouped.setdefault((job[1], job[2]), []).extend(res)
    alphas = [0.0] if config.test == "mp" else list(config.alpha_values)
    cells = []
    for (scenario, rho), reps in grouped.items():
        for j, a in enumerate(alphas):
            cells.append(_summarize(config, scenario, rho, a, [rep[j] for rep in reps]))
    report = SimReport(config, cells)
    for c in cells:
        if c.flagged:
            warnings.warn(f"{c.nonconverged} of {c.replications} fits failed to converge in cell "
                          f"{c.scenario}/{c.fraction}/rho={c.rho}/alpha={c.alpha}", RuntimeWarning)
    return report


def mse_gamma(gammas) -> float:
    return float(np.mean(np.abs(np.asarray(gammas, dtype=float) - 1.0)))


def mse_rho(rhos) -> float:
    return float(np.mean(np.abs(np.asarray(rhos, dtype=float))))


# ---------------------------------------------------------------------------
# tuning-parameter selection


@dataclass(frozen=True)
class Selection:
    alpha: float
    theta: Theta
    rounds: list
    stable: bool


def selection_objective(fits, pilot: Theta, n: int) -> np.ndarray:
    """Estimated mean squared error ``|theta_a - pilot|^2 + tr(V_a(theta_a)) / n`` per fit."""
    p = pilot.as_array()
    out = []
    for tr in fits:
        th = tr.theta_hat
        bias = th.as_array() - p
        out.append(float(bias @ bias + np.trace(model.blocks(th, tr.alpha).V) / n))
    return np.array(out)


def select_alpha(sample: PairedSample, alpha_grid=None, pilot="mle", max_rounds: int = 20,
                 grid_K: int = estimator.DEFAULT_GRID_K) -> Selection:
    """Iteratively choose alpha by minimizing the estimated mean squared error.

    ``pilot`` is ``"mle"``, ``"alpha02"`` or a :class:`Theta`.  After each round
    the winner's estimate becomes the pilot; iteration stops once the winner
    repeats.  Ties go to the smallest alpha.
    """
    if alpha_grid is None:
        alpha_grid = [k / grid_K for k in range(grid_K + 1)]
    grid = sorted(float(a) for a in alpha_grid)
    fits = estimator.fit_alphas(sample, grid, grid_K=grid_K)
    if isinstance(pilot, Theta):
        current = pilot
    elif pilot == "mle":
        current = estimator.mle(sample)
    elif pilot == "alpha02":
        current = estimator.fit(sample, 0.2, grid_K=grid_K).theta_hat
    else:
        raise DomainError(f"unknown pilot {pilot!r}")

    rounds = []
    previous = None
    for _ in range(max_rounds):
        obj = selection_objective(fits, current, sample.n)
        k = int(np.argmin(obj))  # first minimum, i.e. smallest alpha on ties
        rounds.append({"pilot": current.as_array().tolist(), "objective": obj.tolist(),
                       "alpha": grid[k]})
        if previous == k:
            return Selection(grid[k], fits[k].theta_hat, rounds, True)
        previous = k
        current = fits[k].theta_hat
    # no fixed point: keep the better of the last two winners
    last = [grid.index(r["alpha"]) for r in rounds[-2:]]
    obj = rounds[-1]["objective"]
    k = min(last, key=lambda i: (obj[i], grid[i]))
    warnings.warn("alpha selection did not settle; returning the better of the last two choices",
                  RuntimeWarning)
    return Selection(grid[k], fits[k].theta_hat, rounds, False)
