"""Seeded Monte Carlo experiments with replication-level records and summaries."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .baselines import (ThresholdSpec, aj_alpha, default_volatility_threshold, truncated_rv)
from .charfn import ThetaParams
from .errors import ExperimentAbortedError, LevyGmmError, ParameterError
from .gmm import GmmOptions, asymptotic_covariance, scaling_factor, single_param_estimator, solve_gmm
from .levy_sim import SimModelSpec, derive_seed, simulate_increments
from .moments import default_moment_set

ESTIMATORS = ("gmm", "single", "aj", "trv")
WORKERS_ENV = "LEVYGMM_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ParameterError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return 1


def fmt(x) -> str:
    """Round-trip exact decimal text for floats."""
    if isinstance(x, float) or isinstance(x, np.floating):
        return format(float(x), ".17g")
    return str(x)


@dataclass(frozen=True)
class ExperimentConfig:
    model: SimModelSpec
    n: int
    h: float
    horizon: float | None = None
    u_mode: str = "practical"
    tau: float | None = None
    fset: str = "default"
    replications: int = 100
    base_seed: int = 0
    workers: int | None = None
    output_dir: str | None = None
    estimators: tuple = ("gmm",)
    gmm_options: GmmOptions = field(default_factory=lambda: GmmOptions(compute_covariance=False))
    single_target: str = "alpha_1"
    single_function: int = 2
    truth: ThetaParams | None = None
    max_failure_rate: float = 0.2
    histogram_bins: int = 20
    name: str = "experiment"

    def __post_init__(self):
        if self.replications < 1:
            raise ParameterError("replications must be at least 1")
        if self.n < 2 or not self.h > 0:
            raise ParameterError("need n >= 2 and h > 0")
        horizon = self.n * self.h if self.horizon is None else self.horizon
        if abs(self.n * self.h - horizon) > 1e-9 * max(1.0, abs(horizon)):
            raise ParameterError(f"n * h = {self.n * self.h!r} does not match the horizon {horizon!r}")
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "estimators", tuple(self.estimators))
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or not self.estimators:
            raise ParameterError(f"unknown estimators {sorted(bad)}; choose from {ESTIMATORS}")
        if self.fset != "default":
            raise ParameterError(f"unknown moment set {self.fset!r}")
        if self.u_mode not in ("practical", "theory"):
            raise ParameterError("u_mode must be 'practical' or 'theory'")
        if not 0 <= self.max_failure_rate <= 1:
            raise ParameterError("max_failure_rate must lie in [0, 1]")
        if self.truth is None:
            object.__setattr__(self, "truth", self.model.theta())

    @property
    def u(self) -> float:
        return scaling_factor(self.n, self.u_mode, tau=self.tau, h=self.h if self.u_mode == "practical" else None)


def replication_seed(base_seed: int, rep: int) -> int:
    return derive_seed(base_seed, 1_000_003, rep)


def _run_replication(config: ExperimentConfig, rep: int) -> dict:
    seed = replication_seed(config.base_seed, rep)
    batch = simulate_increments(config.model, config.n, config.h, seed)
    fset = default_moment_set()
    u = config.u
    rec = {"rep": rep, "seed": seed}
    if "gmm" in config.estimators:
        try:
            res = solve_gmm(batch, fset, u, config.gmm_options)
            rec["gmm_status"] = res.status
            rec["gmm_iterations"] = res.iterations
            rec["gmm_residual"] = float(res.residual_norm)
            vec = res.theta_hat.to_vector() if res.theta_hat is not None else np.full(config.truth.dim, np.nan)
        except LevyGmmError as exc:
            rec["gmm_status"] = "failed"
            rec["gmm_iterations"] = 0
            rec["gmm_residual"] = float("nan")
            rec["gmm_error"] = str(exc)
            vec = np.full(config.truth.dim, np.nan)
        for name, v in zip(config.truth.coordinate_names(), vec):
            rec[f"gmm_{name}"] = float(v)
    if "single" in config.estimators:
        try:
            sres = single_param_estimator(batch, fset[config.single_function], u, config.truth,
                                          config.single_target)
            rec["single_status"] = "converged"
            rec["single_estimate"] = sres.estimate
            rec["single_sd"] = sres.asym_sd
        except LevyGmmError as exc:
            rec["single_status"] = "failed"
            rec["single_estimate"] = float("nan")
            rec["single_sd"] = float("nan")
            rec["single_error"] = str(exc)
    if "aj" in config.estimators or "trv" in config.estimators:
        sigma_sq = truncated_rv(batch, default_volatility_threshold(batch))
        if "trv" in config.estimators:
            rec["trv_sigma_sq"] = sigma_sq
        if "aj" in config.estimators:
            s = math.sqrt(max(sigma_sq, 1e-12))
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    rec["aj_alpha"] = aj_alpha(batch, ThresholdSpec(4.0 * s), ThresholdSpec(8.0 * s))
                rec["aj_status"] = "converged"
            except LevyGmmError:
                rec["aj_alpha"] = float("nan")
                rec["aj_status"] = "failed"
    return rec


def _target_fields(config: ExperimentConfig):
    """(record field, truth value, estimator, parameter) for every reported estimate."""
    truth = config.truth
    names = truth.coordinate_names()
    vec = truth.to_vector()
    out = []
    if "gmm" in config.estimators:
        out += [(f"gmm_{nm}", float(v), "gmm", nm) for nm, v in zip(names, vec)]
    if "single" in config.estimators and config.single_target in names:
        idx = names.index(config.single_target)
        out.append(("single_estimate", float(vec[idx]), "single", config.single_target))
    # a model without jumps has no alpha to compare against
    if "aj" in config.estimators and vec.size > 1:
        out.append(("aj_alpha", float(vec[1]), "aj", "alpha_1"))
    if "trv" in config.estimators:
        out.append(("trv_sigma_sq", float(vec[0]), "trv", "sigma_sq"))
    return out


def _ok(rec: dict, estimator: str) -> bool:
    status = rec.get(f"{estimator}_status", "converged")
    return status != "failed"


def summarize(config: ExperimentConfig, records: list) -> dict:
    """Flat summary; every number is recomputable from ``records``."""
    summary = {"name": config.name, "replications": config.replications, "n": config.n, "h": config.h,
               "u": config.u, "base_seed": config.base_seed}
    for est in config.estimators:
        fails = sum(1 for r in records if not _ok(r, est))
        summary[f"{est}_failures"] = fails
        summary[f"{est}_failure_rate"] = fails / len(records)
        if est == "gmm":
            summary["gmm_boundary"] = sum(1 for r in records if r.get("gmm_status") == "boundary")
    for fld, true, est, param in _target_fields(config):
        vals = np.array([r[fld] for r in records if _ok(r, est) and np.isfinite(r[fld])])
        key = f"{est}_{param}"
        summary[f"{key}_count"] = int(vals.size)
        if vals.size == 0:
            continue
        err = np.abs(vals - true)
        q1, med, q3 = np.percentile(err, [25, 50, 75])
        summary[f"{key}_mae"] = float(med)
        summary[f"{key}_abs_err_q1"] = float(q1)
        summary[f"{key}_abs_err_q3"] = float(q3)
        summary[f"{key}_mean"] = float(vals.mean())
        summary[f"{key}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return summary


def alpha_histogram(config: ExperimentConfig, records: list):
    """Standardized GMM alpha errors against the asymptotic normal law."""
    try:
        cov = asymptotic_covariance(config.truth, default_moment_set(), config.n, config.u)
    except LevyGmmError:
        return None
    sd = math.sqrt(cov[1, 1])
    z = np.array([(r["gmm_alpha_1"] - config.truth.to_vector()[1]) / sd for r in records
                  if _ok(r, "gmm") and np.isfinite(r.get("gmm_alpha_1", np.nan))])
    if z.size == 0:
        return None
    edges = np.linspace(-4.0, 4.0, config.histogram_bins + 1)
    counts, _ = np.histogram(np.clip(z, edges[0], edges[-1]), bins=edges)
    expected = z.size * np.diff(stats.norm.cdf(edges))
    expected[0] += z.size * stats.norm.cdf(edges[0])
    expected[-1] += z.size * stats.norm.sf(edges[-1])
    ks = stats.kstest(z, "norm")
    return {"asymptotic_sd": sd, "bin_edges": edges.tolist(), "counts": counts.tolist(),
            "expected_counts": expected.tolist(), "ks_statistic": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue)}


@dataclass
class McReport:
    config: ExperimentConfig
    records: list
    summary: dict
    histogram: dict | None = None
    paths: dict = field(default_factory=dict)

    def mae(self, estimator: str, param: str) -> float:
        return self.summary.get(f"{estimator}_{param}_mae", float("nan"))

    def values(self, field_name: str, estimator: str | None = None) -> np.ndarray:
        est = estimator or field_name.split("_")[0]
        return np.array([r[field_name] for r in self.records if _ok(r, est) and np.isfinite(r[field_name])])

    def recompute_summary(self) -> dict:
        return summarize(self.config, self.records)


def _write_records(path: Path, records: list):
    keys = []
    for r in records:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for r in records:
            writer.writerow([fmt(r.get(k, "")) for k in keys])


def write_report(report: McReport, output_dir) -> dict:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = report.config.name
    rec_path = out / f"{name}_records.csv"
    sum_path = out / f"{name}_summary.json"
    _write_records(rec_path, report.records)
    doc = dict(report.summary)
    if report.histogram is not None:
        doc.update({f"hist_{k}": v for k, v in report.histogram.items()})
    with open(sum_path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    report.paths = {"records": str(rec_path), "summary": str(sum_path)}
    return report.paths


def run_mc_experiment(config: ExperimentConfig) -> McReport:
    """Run all replications (in a process pool when ``workers > 1``) and summarize.

    Seeds depend only on the base seed and the replication index, so records
    do not depend on the worker count.
    """
    workers = config.workers or default_workers()
    reps = range(config.replications)
    if workers > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_replication, [config] * len(reps), reps,
                                    chunksize=max(1, len(reps) // (4 * workers))))
    else:
        records = [_run_replication(config, r) for r in reps]
    records.sort(key=lambda r: r["rep"])
    summary = summarize(config, records)
    hist = alpha_histogram(config, records) if "gmm" in config.estimators else None
    report = McReport(config, records, summary, hist)
    if config.output_dir is not None:
        write_report(report, config.output_dir)
    worst = max((summary[f"{e}_failure_rate"] for e in config.estimators), default=0.0)
    if worst > config.max_failure_rate:
        raise ExperimentAbortedError(
            f"failure rate {worst:.1%} exceeds {config.max_failure_rate:.0%}; "
            + ", ".join(f"{e}: {summary[f'{e}_failures']}" for e in config.estimators)
            + (f"; records in {report.paths['records']}" if report.paths else ""))
    return report


TABLE1_H = (5.0 / 23400.0, 1.0 / 23400.0)
TABLE1_FINE_H = 0.2 / 23400.0
TABLE1_ALPHAS = (1.3, 1.7)


def table1_configs(replications: int = 500, base_seed: int = 2024, include_fine: bool = False,
                   workers: int | None = None, output_dir: str | None = None,
                   max_failure_rate: float = 0.2):
    hs = TABLE1_H + ((TABLE1_FINE_H,) if include_fine else ())
    configs = []
    for alpha in TABLE1_ALPHAS:
        for h in hs:
            n = int(round(1.0 / h))
            configs.append(ExperimentConfig(
                model=SimModelSpec.benchmark(alpha=alpha), n=n, h=1.0 / n, horizon=1.0,
                replications=replications, base_seed=derive_seed(base_seed, int(alpha * 10), n),
                workers=workers, output_dir=output_dir, estimators=("gmm", "aj", "trv"),
                max_failure_rate=max_failure_rate, name=f"table1_alpha{alpha}_n{n}"))
    return configs


def run_table1(**kwargs) -> list:
    """Rows ``(alpha, h, gmm sigma^2 MAE, trv sigma^2 MAE, gmm alpha MAE, aj alpha MAE)``."""
    rows = []
    for cfg in table1_configs(**kwargs):
        rep = run_mc_experiment(cfg)
        rows.append({"alpha": cfg.truth.alphas[0], "h": cfg.h, "n": cfg.n,
                     "gmm_sigma_sq_mae": rep.mae("gmm", "sigma_sq"),
                     "trv_sigma_sq_mae": rep.mae("trv", "sigma_sq"),
                     "gmm_alpha_mae": rep.mae("gmm", "alpha_1"),
                     "aj_alpha_mae": rep.mae("aj", "alpha_1"),
                     "gmm_failure_rate": rep.summary["gmm_failure_rate"],
                     "gmm_boundary": rep.summary["gmm_boundary"]})
    return rows
