"""Acceptance criteria; each test prints one PASS/FAIL line (collected in the terminal summary)."""
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

from renyi_bvn import influence as inf
from renyi_bvn import model, wald
from renyi_bvn.cli import read_table
from renyi_bvn.estimator import PairedSample, fit_alphas, mle, objective
from renyi_bvn.influence import GridSpec, if_surface
from renyi_bvn.model import Theta, quadrature_blocks
from renyi_bvn.montecarlo import SimConfig, run

from conftest import gaussian_sample, record_criterion
from test_estimator import direct_maximizer

LACTATE = Path(os.environ.get("RENYI_BVN_LACTATE", Path(__file__).parent / "data" / "lactate.csv"))


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def test_criterion_1_blocks_match_quadrature():
    start = time.perf_counter()
    worst = 0.0
    for rho in (0.0, 0.3, -0.3, 0.9, -0.9):
        for alpha in (0.0, 0.3, 1.0):
            th = Theta(0.5, -1.0, 1.3, 0.7, rho)
            b = model.blocks(th, alpha)
            q = quadrature_blocks(th, alpha)
            for key, closed in (("kappa", b.kappa), ("c", b.c), ("J", b.J), ("S", b.S), ("K", b.K)):
                if key == "c" and alpha == 0.0:
                    worst = max(worst, float(np.abs(q["c"]).max()))
                    continue
                worst = max(worst, rel_err(closed, q[key]))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 60
    record_criterion(1, ok, f"15 (theta, alpha) pairs, worst relative error {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_irm_matches_direct_maximization():
    start = time.perf_counter()
    worst = worst_res = 0.0
    for seed in range(20):
        s = gaussian_sample(seed)
        for tr in fit_alphas(s, [0.2, 0.5]):
            best = direct_maximizer(s, tr.alpha, mle(s))
            worst = max(worst, float(np.abs(tr.theta_hat.as_array() - best).max()))
            if tr.converged:
                worst_res = max(worst_res, tr.eq_residual_norm)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and worst_res < 1e-6 and elapsed < 120
    record_criterion(2, ok, f"40 fits, max deviation {worst:.2e}, max residual {worst_res:.2e}, "
                            f"{elapsed:.1f}s")
    assert ok


def test_criterion_3_influence_closed_forms():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_matrix = 0.0
    for _ in range(100):
        th = Theta(*rng.uniform(-2, 2, 2), *rng.uniform(0.3, 3, 2), rng.uniform(-0.9, 0.9))
        a = float(rng.uniform(0, 1))
        x, y = th.mu1 + th.sigma1 * rng.normal() * 2, th.mu2 + th.sigma2 * rng.normal() * 2
        closed = inf.influence_values(th, a, x, y)
        worst_matrix = max(worst_matrix, rel_err(closed, inf.influence_matrix_form(th, a, x, y)))
    worst_eps = 0.0
    th = Theta(1.0, 2.0, 1.0, 1.5, 0.3)
    for _ in range(10):
        a = float(rng.choice([0.0, 0.3, 0.7]))
        x, y = th.mu1 + 2 * rng.normal(), th.mu2 + 3 * rng.normal()
        closed = inf.influence_values(th, a, x, y)
        worst_eps = max(worst_eps, rel_err(inf.contamination_if(th, a, x, y), closed))
    elapsed = time.perf_counter() - start
    ok = worst_matrix < 1e-10 and worst_eps < 1e-2 and elapsed < 120
    record_criterion(3, ok, f"matrix form {worst_matrix:.2e}, contamination limit {worst_eps:.2e}, "
                            f"{elapsed:.1f}s")
    assert ok


def test_criterion_4_specializations():
    rng = np.random.default_rng(4)
    worst = worst_z = 0.0
    for _ in range(200):
        th = Theta(*rng.uniform(-2, 2, 2), *rng.uniform(0.3, 3, 2), rng.uniform(-0.9, 0.9))
        a = float(rng.uniform(0, 1))
        n = int(rng.integers(10, 200))
        s12 = float(rng.uniform(-1, 1))
        s1, s2 = rng.uniform(0.3, 3, 2)
        m1, m2 = rng.uniform(-2, 2, 2)
        r0 = float(rng.uniform(-0.9, 0.9))
        pairs = [
            (wald.stat_means(th, n, a), wald.constraint_means()),
            (wald.stat_variances(th, n, a), wald.constraint_variances()),
            (wald.stat_correlation(th, n, a, r0), wald.constraint_correlation(r0)),
            (wald.stat_means_and_variances(th, n, a), wald.constraint_means_and_variances()),
            (wald.stat_covariance(th, n, a, s12), wald.constraint_covariance(s12)),
            (wald.stat_fixed_means(th, n, a, m1, m2), wald.constraint_fixed_means(m1, m2)),
            (wald.stat_var_cov(th, n, a, s1, s2, s12), wald.constraint_var_cov(s1, s2, s12)),
        ]
        for closed, c in pairs:
            general = wald.wald_statistic(th, n, a, c)
            worst = max(worst, abs(closed - general) / max(abs(general), 1e-300))
        checks = [
            (wald.z_variances(th, n, a) ** 2, wald.stat_variances(th, n, a)),
            (wald.z_means(th, n, a) ** 2, wald.stat_means(th, n, a)),
            (wald.z_uv(th.rho, n, a) ** 2, wald.stat_correlation_modified(th.rho, n, a, 0.0)),
        ]
        for z2, w in checks:
            worst_z = max(worst_z, abs(z2 - w) / max(abs(w), 1.0))
    ok = worst < 1e-8 and worst_z < 1e-12
    record_criterion(4, ok, f"7 cases x 200 fixtures, worst relative error {worst:.2e}, "
                            f"z^2 vs W {worst_z:.2e}")
    assert ok


def test_criterion_5_real_data(cork_log):
    got = []
    for s in (cork_log, cork_log.drop([15, 17])):
        t = wald.paired_t(s)
        mp = wald.morgan_pitman(s)
        got += [t.statistic, t.p_value, mp.statistic, mp.p_value]
    expected = [-1.454, 0.157, -1.656, 0.110, -2.233, 0.035, -3.033, 0.005]
    dev = max(abs(g - e) for g, e in zip(got, expected))
    ok = dev <= 1e-3 + 1e-12
    detail = f"cork max deviation {dev:.4f}"
    if LACTATE.exists():
        with open(LACTATE, newline="") as fh:
            lac = PairedSample.from_array(read_table(fh, str(LACTATE)))
        res = wald.correlation_t(lac, "greater")
        lac_dev = max(abs(res.statistic - 2.313), abs(res.p_value - 0.020))
        ok = ok and lac_dev <= 1e-3 + 1e-12
        detail += f", lactate deviation {lac_dev:.4f}"
    else:
        detail += ", lactate fixture not supplied (skipped)"
    record_criterion(5, ok, detail)
    assert ok


REFERENCE_CELLS = {
    # (test, scenario, alpha, quantity): published table value
    ("mp", "pure", 0.0, "level"): 0.051,
    ("simW2", "pure", 0.0, "level"): 0.053,
    ("simW2", "pure", 0.2, "level"): 0.053,
    ("simW2", "heavy", 0.0, "level"): 0.847,
    ("simW2", "heavy", 0.2, "level"): 0.425,
    ("simW1", "pure", 0.0, "mse"): 0.169,
    ("simW1", "heavy", 0.0, "mse"): 0.522,
}


@pytest.fixture(scope="module")
def desk_reports():
    workers = os.cpu_count() or 1
    common = dict(n=25, replications=5000, rho_values=(0.0,), fractions=(0.2,), seed=12345,
                  contamination_count="binomial")
    start = time.perf_counter()
    reports = {
        "mp": run(SimConfig(test="mp", scenarios=("pure",), alpha_values=(0.0,), **common),
                  workers=workers),
        "simW2": run(SimConfig(test="simW2", scenarios=("pure", "heavy"), alpha_values=(0.0, 0.2),
                               **common), workers=workers),
        "simW1": run(SimConfig(test="simW1", scenarios=("pure", "heavy"), alpha_values=(0.0,),
                               **common), workers=workers),
    }
    return reports, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_6_monte_carlo_cells(desk_reports):
    reports, elapsed = desk_reports
    misses = []
    worst = 0.0
    for (test, scenario, alpha, qty), reference in REFERENCE_CELLS.items():
        frac = 0.0 if scenario == "pure" else 0.2
        cell = reports[test].cell(scenario, frac, 0.0, alpha)
        value, se = (cell.level, cell.level_se) if qty == "level" else (cell.mse, cell.mse_se)
        z = abs(value - reference) / se
        worst = max(worst, z)
        if z > 3:
            misses.append(f"{test}/{scenario}/{alpha}/{qty}={value:.4f} vs {reference}")
    ok = not misses
    record_criterion(6, ok, f"7 cells, worst distance to reference = {worst:.2f} SE, {elapsed:.0f}s"
                            + (f"; misses: {misses}" if misses else ""))
    assert ok


@pytest.mark.slow
def test_criterion_7_robust_level_closer_to_nominal(desk_reports):
    reports, _ = desk_reports
    heavy = [c for c in reports["simW2"].cells if c.scenario == "heavy"]
    by_alpha = {c.alpha: c.level for c in heavy}
    ok = abs(by_alpha[0.2] - 0.05) < abs(by_alpha[0.0] - 0.05)
    record_criterion(7, ok, f"heavy 20%: level {by_alpha[0.2]:.4f} at alpha=0.2 vs "
                            f"{by_alpha[0.0]:.4f} at alpha=0")
    assert ok


def test_criterion_8_boundedness():
    th = Theta(1.0, 2.0, 1.0, 1.5, 0.3)
    grid = GridSpec(-50, 50, 401, -50, 50, 401)
    wide_alpha = 0.3
    interior = []
    for target in model.PARAM_NAMES + (wald.constraint_variances(),):
        surf = if_surface(th, wide_alpha, target, grid)
        vals = np.abs(surf[:, 2])
        if not np.all(np.isfinite(vals)):
            interior.append(False)
            continue
        k = int(vals.argmax())
        zx = (surf[k, 0] - th.mu1) / th.sigma1
        zy = (surf[k, 1] - th.mu2) / th.sigma2
        interior.append(max(abs(zx), abs(zy)) < 50 and vals.max() > 10 * vals.reshape(401, 401)[[0, -1]].max())
    line = GridSpec(0, 50, 51, 0, 0, 1)
    mu_plain = np.abs(if_surface(th, 0.0, "mu1", line)[:, 2])
    growth = mu_plain[-1] / mu_plain[25]
    ok = all(interior) and growth > 1.9
    record_criterion(8, ok, f"alpha=0.3 maxima interior for all 6 surfaces: {all(interior)}; "
                            f"alpha=0 mu1 IF ratio at 50 vs 25 units = {growth:.3f}")
    assert ok
