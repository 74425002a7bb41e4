"""
Monte Carlo experiment runner

Replication r simulates a field from replication_seed(cfg.seed, r), so a
report depends only on the configuration. Replications are split into
contiguous index ranges across worker processes and folded back in index
order.
"""

import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dataclass_field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from spdevol.estimate import (
    DegenerateIncrementsError,
    curvature_logratio,
    feasible_ci,
    quarticity,
    realized_volatility_profile,
    sigma2_multi,
)
from spdevol.model import OperatorParams, VolatilitySpec
from spdevol.oracle import first_order_sq_increment, gamma_constant
from spdevol.regress import (
    DISCRETE_MODE_BELOW,
    asymptotic_cov,
    build_regression_data,
    fit_least_squares,
)
from spdevol.simulate import (
    DEFAULT_CUTOFF,
    INITIAL_CONDITIONS,
    SamplingGrid,
    SimulationConfig,
    synthesize_field,
)
from spdevol.utils.normal import norm_ppf
from spdevol.utils.streams import check_seed, replication_seed, worker_count

logger = logging.getLogger(__name__)

ESTIMATORS = ("sigma2_multi", "quarticity", "curvature_logratio", "fit_least_squares")
QQ_AGAINST = ("feasible", "infeasible")
MIN_QQ_REPLICATIONS = 30
CHUNKS_PER_WORKER = 4


@dataclass(frozen=True)
class ExperimentConfig:
    params: OperatorParams
    vol: VolatilitySpec
    n: int = 1000
    m: int = 9
    K: int = DEFAULT_CUTOFF
    refinement: int = 1
    replications: int = 3000
    seed: int = 0
    initial_condition: str = "zero"
    y: Optional[Tuple[float, ...]] = None
    estimators: Tuple[str, ...] = ESTIMATORS
    level: float = 0.95

    def __post_init__(self):
        if isinstance(self.replications, bool) or not isinstance(self.replications, (int, np.integer)) \
                or self.replications < 1:
            raise ValueError(f"replications must be a positive integer, got {self.replications!r}")
        object.__setattr__(self, "seed", check_seed(self.seed))
        if self.y is not None:
            object.__setattr__(self, "y", tuple(float(v) for v in self.y))
            object.__setattr__(self, "m", len(self.y))
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"Unknown estimators: {sorted(unknown)}")
        object.__setattr__(self, "estimators", tuple(e for e in ESTIMATORS if e in self.estimators))
        if self.initial_condition not in INITIAL_CONDITIONS:
            raise ValueError(f"Initial condition must be one of {INITIAL_CONDITIONS}, got {self.initial_condition!r}")
        if not 0 < self.level < 1:
            raise ValueError(f"Confidence level must lie in (0, 1), got {self.level}")
        # validates n, m and y
        self.grid
        SimulationConfig(cutoff_K=self.K, seed=self.seed, refinement=self.refinement)

    @property
    def grid(self):
        if self.y is not None:
            return SamplingGrid(n=self.n, y=self.y)
        return SamplingGrid.equispaced(self.n, self.m)

    def simulation_config(self, r):
        return SimulationConfig(cutoff_K=self.K, seed=replication_seed(self.seed, r),
                                initial_condition=self.initial_condition, refinement=self.refinement)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "vol": self.vol.to_dict(),
            "n": self.n,
            "m": self.m,
            "K": self.K,
            "refinement": self.refinement,
            "replications": self.replications,
            "seed": self.seed,
            "initial_condition": self.initial_condition,
            "y": list(self.y) if self.y is not None else None,
            "estimators": list(self.estimators),
            "level": self.level,
        }


@dataclass(frozen=True)
class ReplicationRecord:
    index: int
    seed: int
    rv: Tuple[float, ...]
    sigma2: Optional[float] = None
    quarticity: Optional[float] = None
    ci: Optional[Tuple[float, float]] = None
    covered: Optional[bool] = None
    curvature_logratio: Optional[float] = None
    iv0_hat: Optional[float] = None
    kappa_hat: Optional[float] = None
    converged: Optional[bool] = None


@dataclass(frozen=True)
class StatSummary:
    mean: float
    mc_variance: float
    mn_scaled_variance: float
    theory_variance: Optional[float] = None
    ratio: Optional[float] = None
    truth: Optional[float] = None
    count: int = 1

    @property
    def stderr_of_mean(self):
        return math.sqrt(self.mc_variance / self.count)

    def to_dict(self):
        return {
            "mean": self.mean,
            "mc_variance": self.mc_variance,
            "mn_scaled_variance": self.mn_scaled_variance,
            "theory_variance": self.theory_variance,
            "ratio": self.ratio,
            "truth": self.truth,
            "count": self.count,
        }


@dataclass(frozen=True)
class QQTable:
    errors: np.ndarray
    quantiles: np.ndarray
    ks_stat: float
    ks_pvalue: float
    against: str

    def to_frame(self):
        return pd.DataFrame({"normal_quantile": self.quantiles, "standardized_error": self.errors})


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    records: List[ReplicationRecord] = dataclass_field(repr=False)
    summary: Dict[str, StatSummary]
    coverage: Optional[float] = None
    ks_stat: Optional[float] = None
    ks_pvalue: Optional[float] = None
    qq: Optional[QQTable] = dataclass_field(default=None, repr=False)
    kappa_variance_ratio: Optional[float] = None

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "summary": {name: s.to_dict() for name, s in self.summary.items()},
            "coverage": self.coverage,
            "ks_stat": self.ks_stat,
            "ks_pvalue": self.ks_pvalue,
            "kappa_variance_ratio": self.kappa_variance_ratio,
            "replications": len(self.records),
        }


def _active_estimators(cfg):
    active = list(cfg.estimators)
    if cfg.m < 2:
        for name in ("curvature_logratio", "fit_least_squares"):
            if name in active:
                logger.warning(f"{name} needs at least two spatial points, skipped for m=1")
                active.remove(name)
    return tuple(active)


def _run_replication(cfg, r, active):
    sim = cfg.simulation_config(r)
    field = synthesize_field(cfg.params, cfg.vol, cfg.grid, sim, threads=1, warn=False)
    values = {"index": r, "seed": sim.seed,
              "rv": tuple(float(v) for v in realized_volatility_profile(field))}

    if "sigma2_multi" in active or "quarticity" in active:
        quart = quarticity(field, cfg.params)
        values["quarticity"] = quart
        if "sigma2_multi" in active:
            sigma2 = sigma2_multi(field, cfg.params, warn=False)
            ci = feasible_ci(sigma2, quart, field.n, field.m, cfg.level)
            values.update(sigma2=sigma2, ci=ci.ci, covered=ci.covers(cfg.vol.integrated_variance()))

    if "curvature_logratio" in active:
        try:
            values["curvature_logratio"] = curvature_logratio(field)
        except DegenerateIncrementsError:
            logger.debug(f"Replication {r}: degenerate increments, no curvature estimate")

    if "fit_least_squares" in active:
        try:
            fit = fit_least_squares(build_regression_data(field))
            values.update(iv0_hat=fit.iv0_hat, kappa_hat=fit.kappa_hat, converged=fit.converged)
        except ValueError as e:
            logger.debug(f"Replication {r}: least-squares fit skipped ({e})")

    return ReplicationRecord(**values)


def _run_chunk(cfg, start, stop, active):
    return [_run_replication(cfg, r, active) for r in range(start, stop)]


def _chunks(total, workers):
    count = min(total, workers * CHUNKS_PER_WORKER)
    bounds = np.linspace(0, total, count + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]


def _variance(values):
    values = np.asarray(values, dtype=float)
    return float(np.var(values, ddof=1)) if values.size > 1 else 0.0


def _summarize(values, mn, theory=None, truth=None):
    values = np.asarray(values, dtype=float)
    variance = _variance(values)
    ratio = mn * variance / theory if theory else None
    return StatSummary(mean=float(values.mean()), mc_variance=variance, mn_scaled_variance=mn * variance,
                       theory_variance=theory, ratio=ratio, truth=truth, count=int(values.size))


def _theory_fit_cov(cfg):
    iv0 = cfg.params.sigma0_squared(cfg.vol.integrated_variance())
    if iv0 <= 0:
        return None
    mode = "discrete" if cfg.m < DISCRETE_MODE_BELOW else "integral"
    return asymptotic_cov((iv0, cfg.params.kappa), cfg.params.theta2,
                          cfg.vol.integrated_quarticity(), cfg.grid.y, mode)


def _build_report(cfg, records, active):
    mn = cfg.m * cfg.n
    summary = {}
    coverage = ks_stat = ks_pvalue = qq = kappa_ratio = None
    iv_truth = cfg.vol.integrated_variance()
    quart_truth = cfg.vol.integrated_quarticity()

    if "sigma2_multi" in active:
        theory = math.pi * gamma_constant() * quart_truth
        summary["sigma2_multi"] = _summarize([r.sigma2 for r in records], mn, theory, iv_truth)
        coverage = float(np.mean([r.covered for r in records]))
    if "quarticity" in active or "sigma2_multi" in active:
        summary["quarticity"] = _summarize([r.quarticity for r in records], mn, truth=quart_truth)

    curvature = [r.curvature_logratio for r in records if r.curvature_logratio is not None]
    if "curvature_logratio" in active and curvature:
        summary["curvature_logratio"] = _summarize(curvature, cfg.n, truth=cfg.params.kappa)

    fitted = [r for r in records if r.iv0_hat is not None]
    if "fit_least_squares" in active and fitted:
        theory = _theory_fit_cov(cfg)
        iv0 = np.array([r.iv0_hat for r in fitted])
        kappa = np.array([r.kappa_hat for r in fitted])
        summary["iv0_hat"] = _summarize(iv0, mn, theory[0, 0] if theory is not None else None,
                                        cfg.params.sigma0_squared(iv_truth))
        summary["kappa_hat"] = _summarize(kappa, mn, theory[1, 1] if theory is not None else None,
                                          cfg.params.kappa)
        cross = float(np.cov(iv0, kappa)[0, 1]) if len(fitted) > 1 else 0.0
        theory_cross = theory[0, 1] if theory is not None else None
        summary["iv0_kappa_cov"] = StatSummary(
            mean=cross, mc_variance=cross, mn_scaled_variance=mn * cross, theory_variance=theory_cross,
            ratio=mn * cross / theory_cross if theory_cross else None, count=len(fitted))
        if curvature and summary["curvature_logratio"].mc_variance > 0:
            kappa_ratio = summary["kappa_hat"].mc_variance / summary["curvature_logratio"].mc_variance
        not_converged = sum(1 for r in fitted if not r.converged)
        if not_converged:
            logger.warning(f"{not_converged} of {len(fitted)} least-squares fits did not converge")

    report = ExperimentReport(config=cfg, records=records, summary=summary, coverage=coverage,
                              kappa_variance_ratio=kappa_ratio)
    if "sigma2_multi" in active and len(records) >= MIN_QQ_REPLICATIONS:
        if all(r.quarticity > 0 for r in records):
            qq = qq_standardized_errors(report, "feasible")
            ks_stat, ks_pvalue = qq.ks_stat, qq.ks_pvalue
        else:
            logger.warning("Some quarticity estimates are zero, Q-Q table and KS test skipped")
    return replace(report, qq=qq, ks_stat=ks_stat, ks_pvalue=ks_pvalue)


def run_experiment(cfg, workers=None):
    """Run cfg.replications replications and summarize them"""
    active = _active_estimators(cfg)
    if cfg.K < 10 * cfg.n:
        logger.warning(f"Cutoff K={cfg.K} < 10*n={10 * cfg.n}: expect a negative bias from spectral truncation")
    if cfg.m > math.sqrt(cfg.n):
        logger.warning(f"m={cfg.m} exceeds sqrt(n)={math.sqrt(cfg.n):.1f}: "
                       f"the sqrt(mn) rate is not guaranteed in this regime")

    workers = min(worker_count(workers), cfg.replications)
    chunks = _chunks(cfg.replications, workers)
    logger.info(f"Running {cfg.replications} replications (n={cfg.n}, m={cfg.m}, K={cfg.K}) "
                f"on {workers} workers")

    if workers == 1:
        results = [_run_chunk(cfg, a, b, active) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, cfg, a, b, active) for a, b in chunks]
            results = []
            for (a, b), future in zip(chunks, futures):
                results.append(future.result())
                logger.debug(f"Replications {a}..{b - 1} done")

    # fold in replication order
    records = [record for chunk in results for record in chunk]
    logger.info(f"Experiment finished: {len(records)} replications")
    return _build_report(cfg, records, active)


def qq_standardized_errors(report, against="feasible"):
    """
    Sorted standardized errors √(mn)(σ̂² - ∫σ²)/√(πΓ q) against N(0,1) quantiles

    q is the per-replication quarticity estimate (feasible) or the true ∫σ⁴
    (infeasible). Plotting positions are (i - 0.5)/R.
    """
    if against not in QQ_AGAINST:
        raise ValueError(f"against must be one of {QQ_AGAINST}, got {against!r}")
    records = report.records
    if len(records) < MIN_QQ_REPLICATIONS:
        raise ValueError(f"Q-Q table needs at least {MIN_QQ_REPLICATIONS} replications, got {len(records)}")
    if any(r.sigma2 is None for r in records):
        raise ValueError("Q-Q table needs the sigma2_multi estimator")

    cfg = report.config
    sigma2 = np.array([r.sigma2 for r in records])
    if against == "feasible":
        quart = np.array([r.quarticity for r in records])
    else:
        quart = np.full(sigma2.shape, cfg.vol.integrated_quarticity())
    if np.any(quart <= 0):
        raise ValueError("Standardized errors need a strictly positive quarticity")

    errors = np.sort(math.sqrt(cfg.m * cfg.n) * (sigma2 - cfg.vol.integrated_variance())
                     / np.sqrt(math.pi * gamma_constant() * quart))
    R = errors.size
    quantiles = norm_ppf((np.arange(1, R + 1) - 0.5) / R)
    ks = stats.kstest(errors, "norm")
    return QQTable(errors=errors, quantiles=quantiles, ks_stat=float(ks.statistic),
                   ks_pvalue=float(ks.pvalue), against=against)


def spatial_profile(cfg, report=None, workers=None):
    """Per-point Monte Carlo mean of RV_n(y_j) next to the first-order curve"""
    if report is None:
        report = run_experiment(replace(cfg, estimators=()), workers=workers)
    rv = np.array([r.rv for r in report.records])
    delta = 1.0 / cfg.n
    iv = cfg.vol.integrated_variance()
    y = cfg.grid.y_array()
    theory = np.array([first_order_sq_increment(cfg.params, iv, v, delta) / math.sqrt(delta) for v in y])
    mean_rv = rv.mean(axis=0)
    rel_dev = np.divide(mean_rv - theory, theory, out=np.zeros_like(theory), where=theory != 0)
    return pd.DataFrame({"y": y, "mean_rv": mean_rv, "theory": theory, "rel_dev": rel_dev,
                         "mc_stderr": rv.std(axis=0, ddof=1) / math.sqrt(len(rv)) if len(rv) > 1 else 0.0})


def variance_ratio_sweep(cfg, m_values, workers=None):
    """One row of Monte Carlo / theory variance ratios per number of spatial points"""
    rows = []
    for m in m_values:
        logger.info(f"Variance-ratio sweep: m={m}")
        report = run_experiment(replace(cfg, m=int(m), y=None), workers=workers)
        row = {"m": int(m)}
        for name in ("sigma2_multi", "iv0_hat", "kappa_hat", "iv0_kappa_cov"):
            summary = report.summary.get(name)
            row[f"ratio_{name}"] = summary.ratio if summary is not None else None
        row["kappa_variance_ratio"] = report.kappa_variance_ratio
        rows.append(row)
    return pd.DataFrame(rows)


def write_table_csv(frame, path):
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"Table written to {path} ({len(frame)} rows)")


def write_qq_csv(table, path):
    write_table_csv(table.to_frame(), path)


def write_profile_csv(frame, path):
    write_table_csv(frame, path)


def write_ratios_csv(frame, path):
    write_table_csv(frame, path)
