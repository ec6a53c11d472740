"""Command-line interface.

Results are printed to stdout as JSON; tabular payloads (influence surfaces,
simulation reports) go to CSV files via ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from importlib import resources

import numpy as np

from . import estimator, influence, montecarlo, wald
from .errors import ConditioningError, ConstraintError, DegenerateSampleError, DomainError
from .estimator import PairedSample
from .model import PARAM_NAMES, Theta

DATASETS = ("cork",)
CONSTRAINT_TARGETS = {
    "means": lambda a: wald.constraint_means(),
    "variances": lambda a: wald.constraint_variances(),
    "correlation": lambda a: wald.constraint_correlation(_need(a, "rho0")),
    "means_and_variances": lambda a: wald.constraint_means_and_variances(),
    "covariance": lambda a: wald.constraint_covariance(_need(a, "sigma12")),
    "fixed_means": lambda a: wald.constraint_fixed_means(_need(a, "mu10"), _need(a, "mu20")),
    "var_cov": lambda a: wald.constraint_var_cov(_need(a, "sigma10"), _need(a, "sigma20"),
                                                 _need(a, "sigma12")),
}


class UsageError(Exception):
    pass


def _need(args, name):
    value = getattr(args, name, None)
    if value is None:
        raise UsageError(f"--{name} is required for this target")
    return value


# ---------------------------------------------------------------------------
# input


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_table(lines, source: str = "<input>") -> np.ndarray:
    """Parse comma-separated ``x,y`` rows; a non-numeric first row is taken as a header."""
    rows = []
    for lineno, row in enumerate(csv.reader(lines), 1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and not all(_is_number(c) for c in row):
            continue
        if len(row) != 2:
            raise DomainError(f"{source}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise DomainError(f"{source}:{lineno}: non-numeric value in {row!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DomainError(f"{source}:{lineno}: non-finite value")
        rows.append((x, y))
    if len(rows) < 3:
        raise DomainError(f"{source}: need at least 3 rows, got {len(rows)}")
    return np.array(rows)


def load_dataset(name: str) -> np.ndarray:
    if name not in DATASETS:
        raise DomainError(f"unknown dataset {name!r}")
    text = resources.files("renyi_bvn").joinpath("data", f"{name}.csv").read_text()
    return read_table(text.splitlines(), name)


def load_sample(args) -> PairedSample:
    if args.dataset:
        data = load_dataset(args.dataset)
    else:
        with open(args.input, newline="") as fh:
            data = read_table(fh, args.input)
    if args.drop:
        try:
            idx = [int(i) - 1 for i in args.drop.split(",")]
        except ValueError:
            raise UsageError(f"--drop expects comma-separated row numbers, got {args.drop!r}") from None
        if any(i < 0 or i >= len(data) for i in idx):
            raise DomainError(f"--drop rows must lie in 1..{len(data)}")
        data = np.delete(data, idx, axis=0)
    if args.log:
        if np.any(data <= 0):
            raise DomainError("--log needs strictly positive data")
        data = np.log(data)
    return PairedSample.from_array(data)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def parse_grid(text: str) -> influence.GridSpec:
    """``xmin:xmax:nx,ymin:ymax:ny`` in standardized units."""
    try:
        xs, ys = text.split(",")
        x0, x1, nx = xs.split(":")
        y0, y1, ny = ys.split(":")
        return influence.GridSpec(float(x0), float(x1), int(nx), float(y0), float(y1), int(ny))
    except (ValueError, DomainError) as exc:
        raise argparse.ArgumentTypeError(f"bad grid spec {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# serialization


def theta_dict(theta: Theta | None):
    if theta is None:
        return None
    return {name: getattr(theta, name) for name in PARAM_NAMES}


def trace_dict(tr: estimator.EstimateTrace) -> dict:
    return {
        "alpha": tr.alpha,
        "theta": theta_dict(tr.theta_hat),
        "converged": tr.converged,
        "inner_iterations": tr.inner_iterations,
        "objective": tr.objective,
        "eq_residual": tr.eq_residual_norm,
        "rho_clamped": tr.rho_clamped,
        "weights": {"min": float(tr.weights.min()), "mean": float(tr.weights.mean()),
                    "max": float(tr.weights.max())},
    }


def result_dict(res: wald.TestResult) -> dict:
    return {
        "test": res.name,
        "statistic": res.statistic,
        "distribution": res.dist.kind,
        "df": res.dist.df,
        "p_value": res.p_value,
        "sided": res.sided,
        "level": res.level,
        "reject": res.reject_at_level,
        "alpha": res.alpha,
        "theta": theta_dict(res.theta_used),
        "details": res.details,
    }


def write_rows(path, header, rows):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> dict:
    sample = load_sample(args)
    if args.alphas is not None:
        traces = estimator.fit_alphas(sample, args.alphas, grid_K=args.grid_k, xi=args.xi,
                                      max_inner=args.max_inner)
    else:
        traces = estimator.irm_fit(sample, args.grid_k, args.xi, args.max_inner)
    return {"n": sample.n, "estimates": [trace_dict(t) for t in traces]}


def cmd_test(args) -> dict:
    sample = load_sample(args)
    try:
        res = wald.run_test(sample, args.case, alpha=args.alpha, level=args.level,
                            sided=args.sided, rho0=args.rho0, sigma12_0=args.sigma12,
                            mu1_0=args.mu10, mu2_0=args.mu20, sigma1_0=args.sigma10,
                            sigma2_0=args.sigma20)
    except ConstraintError as exc:
        raise UsageError(str(exc)) from None
    out = result_dict(res)
    out["decision"] = ("reject" if res.reject_at_level else "do not reject") + f" H0 at level {res.level}"
    return {"n": sample.n, "result": out}


def cmd_influence(args) -> dict:
    theta = Theta(*args.theta)
    if args.target in PARAM_NAMES:
        which = args.target
    elif args.target in CONSTRAINT_TARGETS:
        which = CONSTRAINT_TARGETS[args.target](args)
    else:
        raise UsageError(f"--target must be a parameter ({', '.join(PARAM_NAMES)}) "
                         f"or a case ({', '.join(CONSTRAINT_TARGETS)})")
    table = influence.if_surface(theta, args.alpha, which, args.grid)
    write_rows(args.out, ("x", "y", "value"), table)
    if args.out in (None, "-"):
        return None
    vals = table[:, 2]
    return {"theta": theta_dict(theta), "alpha": args.alpha, "target": args.target,
            "points": int(table.shape[0]), "out": args.out,
            "min": float(vals.min()), "max": float(vals.max())}


def cmd_simulate(args) -> dict:
    config = montecarlo.load_config(args.config)
    report = montecarlo.run(config, workers=args.threads)
    text = report.to_csv()
    if args.out in (None, "-"):
        sys.stdout.write(text)
        return None
    with open(args.out, "w", newline="") as fh:
        fh.write(text)
    return {"config": {k: getattr(config, k) for k in config.__dataclass_fields__},
            "out": args.out, "cells": len(report.cells),
            "flagged": [[c.scenario, c.fraction, c.rho, c.alpha] for c in report.cells if c.flagged]}


def cmd_select_alpha(args) -> dict:
    sample = load_sample(args)
    pilot = {"mle": "mle", "0.2": "alpha02", "alpha02": "alpha02"}.get(args.pilot)
    if pilot is None:
        raise UsageError(f"--pilot must be mle or 0.2, got {args.pilot!r}")
    grid = args.alphas if args.alphas is not None else None
    sel = montecarlo.select_alpha(sample, grid, pilot, args.max_rounds, args.grid_k)
    return {"n": sample.n, "alpha": sel.alpha, "theta": theta_dict(sel.theta),
            "stable": sel.stable, "rounds": sel.rounds}


# ---------------------------------------------------------------------------
# parser


def _add_input(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="CSV file with two numeric columns (optional header row)")
    src.add_argument("--dataset", choices=DATASETS, help="bundled dataset")
    p.add_argument("--log", action="store_true", help="take natural logarithms of the data")
    p.add_argument("--drop", help="comma-separated 1-based row numbers to remove")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="renyi-bvn",
                                     description="Robust bivariate normal estimation and tests.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="fit along a grid of tuning parameters")
    _add_input(p)
    p.add_argument("--alphas", type=_float_list, help="comma-separated tuning parameters")
    p.add_argument("--grid-k", type=int, default=estimator.DEFAULT_GRID_K)
    p.add_argument("--xi", type=float, default=estimator.DEFAULT_XI)
    p.add_argument("--max-inner", type=int, default=estimator.DEFAULT_MAX_INNER)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("test", help="run a hypothesis test")
    _add_input(p)
    p.add_argument("--case", required=True, choices=wald.CASES)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--rho0", type=float)
    p.add_argument("--sigma12", type=float, help="null covariance")
    p.add_argument("--mu10", type=float)
    p.add_argument("--mu20", type=float)
    p.add_argument("--sigma10", type=float)
    p.add_argument("--sigma20", type=float)
    p.add_argument("--sided", choices=wald.SIDES, default="two")
    p.add_argument("--level", type=float, default=0.05)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("influence", help="influence-function surface as CSV")
    p.add_argument("--theta", type=float, nargs=5, required=True,
                   metavar=("MU1", "MU2", "SIGMA1", "SIGMA2", "RHO"))
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--target", required=True, help="parameter name or test case")
    p.add_argument("--grid", type=parse_grid, default=influence.GridSpec(),
                   help="xmin:xmax:nx,ymin:ymax:ny in standardized units")
    p.add_argument("--rho0", type=float)
    p.add_argument("--sigma12", type=float)
    p.add_argument("--mu10", type=float)
    p.add_argument("--mu20", type=float)
    p.add_argument("--sigma10", type=float)
    p.add_argument("--sigma20", type=float)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("simulate", help="Monte Carlo study from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("select-alpha", help="data-driven choice of the tuning parameter")
    _add_input(p)
    p.add_argument("--pilot", default="mle", help="mle or 0.2")
    p.add_argument("--grid-k", type=int, default=estimator.DEFAULT_GRID_K)
    p.add_argument("--alphas", type=_float_list, help="explicit alpha grid")
    p.add_argument("--max-rounds", type=int, default=20)
    p.set_defaults(func=cmd_select_alpha)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            payload = args.func(args)
        except UsageError as exc:
            parser.error(str(exc))
        except (OSError, DomainError, DegenerateSampleError, ConditioningError,
                ConstraintError, ArithmeticError) as exc:
            print(f"renyi-bvn: error: {exc}", file=sys.stderr)
            return 1
    messages = [str(w.message) for w in caught]
    for m in messages:
        print(f"renyi-bvn: warning: {m}", file=sys.stderr)
    if payload is not None:
        report = {"command": args.command,
                  "arguments": {k: v for k, v in vars(args).items() if k != "func" and not callable(v)},
                  "results": payload, "warnings": messages}
        json.dump(report, sys.stdout, indent=2, default=_json_default)
        sys.stdout.write("\n")
    return 0


def _json_default(obj):
    if isinstance(obj, influence.GridSpec):
        return obj.__dict__
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


if __name__ == "__main__":
    sys.exit(main())
