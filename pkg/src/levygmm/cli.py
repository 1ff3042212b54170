"""Command-line entry point: ``levygmm simulate|estimate|mc|fisher|table1``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import LevyGmmError, ParameterError
from .experiments import ExperimentConfig, fmt, run_mc_experiment, run_table1
from .fisher_lab import fisher_limit, fisher_trajectory
from .gmm import GmmOptions, scaling_factor, solve_gmm
from .levy_sim import IncrementBatch, SimModelSpec, StableSpec, simulate_increments
from .moments import default_moment_set

log = logging.getLogger("levygmm")


def write_increments(path, batch: IncrementBatch):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "increment"])
        for i, v in enumerate(batch.values):
            w.writerow([i, fmt(float(v))])


def read_increments(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["index", "increment"]:
            raise ValueError(f"{path}: expected header 'index,increment'")
        vals = [float(row[1]) for row in reader if row]
    if not vals:
        raise ValueError(f"{path}: no increments")
    return np.array(vals)


def _model_from_args(a) -> SimModelSpec:
    comps = () if a.alpha is None else (StableSpec(a.alpha, a.beta, a.scale),)
    nuisance = StableSpec(a.nuisance_alpha, 0.0, a.nuisance_scale) if a.nuisance_scale > 0 else None
    return SimModelSpec(a.mu, a.sigma, comps, nuisance)


def _add_model_args(p, alpha_default=None):
    p.add_argument("--alpha", type=float, default=alpha_default, help="stable index (omit for no jumps)")
    p.add_argument("--beta", type=float, default=-1.0 / 3.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--nuisance-alpha", type=float, default=0.5)
    p.add_argument("--nuisance-scale", type=float, default=0.0)


def _u_value(spec: str, n: int, h: float, tau):
    if spec == "practical":
        return scaling_factor(n, "practical", h=h)
    if spec == "theory":
        return scaling_factor(n, "theory", tau=tau)
    try:
        u = float(spec)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--u must be 'practical', 'theory' or a number, got {spec!r}")
    if not u > 0:
        raise argparse.ArgumentTypeError("--u must be positive")
    return u


def cmd_simulate(a):
    batch = simulate_increments(_model_from_args(a), a.n, a.h, a.seed)
    write_increments(a.out, batch)
    log.info("wrote %d increments to %s", batch.n, a.out)
    return 0


def cmd_estimate(a):
    values = read_increments(a.inp)
    n = values.size
    h = a.h if a.h is not None else a.horizon / n
    batch = IncrementBatch(h, values)
    u = _u_value(a.u, n, h, a.tau)
    opts = GmmOptions(restarts=a.restarts, jacobian=a.jacobian)
    res = solve_gmm(batch, default_moment_set(), u, opts)
    doc = res.to_dict()
    text = json.dumps(doc, indent=1)
    if a.out:
        Path(a.out).write_text(text)
    else:
        print(text)
    return 0 if res.status != "failed" else 1


def cmd_mc(a):
    if a.n is None and a.h is None:
        raise argparse.ArgumentTypeError("give --n or --h")
    n = a.n if a.n is not None else int(round(a.horizon / a.h))
    h = a.h if a.h is not None else a.horizon / n
    cfg = ExperimentConfig(model=_model_from_args(a), n=n, h=h, horizon=a.horizon, u_mode=a.u, tau=a.tau,
                           replications=a.reps, base_seed=a.seed, workers=a.workers, output_dir=a.out_dir,
                           estimators=tuple(a.estimators.split(",")), max_failure_rate=a.max_failure_rate,
                           name=a.name)
    rep = run_mc_experiment(cfg)
    print(json.dumps(rep.summary, indent=1))
    return 0


def cmd_fisher(a):
    if not a.h_min < a.h_max:
        raise argparse.ArgumentTypeError("--h-min must be below --h-max")
    decades = np.arange(math.floor(math.log10(a.h_max) + 1e-9), math.ceil(math.log10(a.h_min) - 1e-9) - 1, -1)
    hs = [10.0 ** d for d in decades]
    hs = [h for h in hs if a.h_min <= h <= a.h_max] or [a.h_min]
    if hs[-1] != a.h_min:
        hs.append(a.h_min)
    rows = fisher_trajectory(a.sigma2, a.r, a.alpha, hs)
    limit = fisher_limit(a.sigma2, a.r, a.alpha)
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "i_rr", "i_ra", "i_aa", "normalized_det", "max_rel_distance",
                    "limit_rr", "limit_ra", "limit_aa"])
        for row in rows:
            w.writerow([fmt(x) for x in row] + [fmt(limit[0, 0]), fmt(limit[0, 1]), fmt(limit[1, 1])])
    return 0


def cmd_table1(a):
    rows = run_table1(replications=a.reps, base_seed=a.seed, include_fine=a.include_fine,
                      workers=a.workers, output_dir=a.out_dir, max_failure_rate=a.max_failure_rate)
    if a.out_dir:
        path = Path(a.out_dir) / "table1.csv"
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: fmt(v) for k, v in r.items()})
    print(json.dumps(rows, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levygmm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate increments to CSV")
    _add_model_args(s)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="fit the moment estimator to an increments CSV")
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--h", type=float, default=None, help="step; default horizon / n")
    e.add_argument("--horizon", type=float, default=1.0)
    e.add_argument("--u", default="practical", help="'practical', 'theory' or a number")
    e.add_argument("--tau", type=float, default=None)
    e.add_argument("--restarts", type=int, default=0)
    e.add_argument("--jacobian", choices=["finite_difference", "analytic"], default="finite_difference")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_estimate)

    m = sub.add_parser("mc", help="Monte Carlo experiment")
    _add_model_args(m, alpha_default=1.3)
    m.add_argument("--n", type=int, default=None)
    m.add_argument("--h", type=float, default=None)
    m.add_argument("--horizon", type=float, default=1.0)
    m.add_argument("--u", choices=["practical", "theory"], default="practical")
    m.add_argument("--tau", type=float, default=None)
    m.add_argument("--reps", type=int, default=100)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--workers", type=int, default=None)
    m.add_argument("--estimators", default="gmm,aj,trv")
    m.add_argument("--max-failure-rate", type=float, default=0.2)
    m.add_argument("--name", default="mc")
    m.add_argument("--out-dir", default=None)
    m.set_defaults(func=cmd_mc)

    f = sub.add_parser("fisher", help="rescaled Fisher block trajectory")
    f.add_argument("--alpha", type=float, required=True)
    f.add_argument("--r", type=float, default=1.0)
    f.add_argument("--sigma2", type=float, default=1.0)
    f.add_argument("--h-min", type=float, required=True)
    f.add_argument("--h-max", type=float, default=1e-3)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fisher)

    t = sub.add_parser("table1", help="median absolute errors on the benchmark grid")
    t.add_argument("--reps", type=int, default=500)
    t.add_argument("--seed", type=int, default=2024)
    t.add_argument("--workers", type=int, default=None)
    t.add_argument("--include-fine", action="store_true", help="add h = 0.2/23400 (slow)")
    t.add_argument("--max-failure-rate", type=float, default=0.2)
    t.add_argument("--out-dir", default=None)
    t.set_defaults(func=cmd_table1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (argparse.ArgumentTypeError, ParameterError) as exc:
        parser.print_usage(sys.stderr)
        print(f"levygmm: error: {exc}", file=sys.stderr)
        return 2
    except (LevyGmmError, ValueError, OSError) as exc:
        print(f"levygmm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
