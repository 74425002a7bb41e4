"""
Method-of-moments volatility estimation from discretely observed fields

All statistics are built from the time increments Δ_iX(y_j). The squared
increments are of order √Δ_n, so realized volatility is normalized by
n√Δ_n rather than n·Δ_n. Fields simulated with time-varying σ can be passed
unchanged; the volatility estimators then target ∫σ² and the quarticity
targets ∫σ⁴.
"""

import math
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from spdevol.oracle import gamma_constant
from spdevol.simulate import increments
from spdevol.utils.normal import norm_ppf, two_sided_critical

logger = logging.getLogger(__name__)


def normal_quantile(p):
    """Standard normal quantile, rational approximation polished by one Halley step"""
    return norm_ppf(p)


class DegenerateIncrementsError(ValueError):
    """Raised when a log-ratio is taken of a non-positive sum of squared increments"""


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    stderr: float
    level: float
    ci: Tuple[float, float]
    n_obs: int

    def covers(self, value):
        return self.ci[0] <= value <= self.ci[1]

    def to_dict(self):
        return {
            "point": self.point,
            "stderr": self.stderr,
            "level": self.level,
            "lo": self.ci[0],
            "hi": self.ci[1],
            "n_obs": self.n_obs,
        }


def _check_index(field, j):
    if isinstance(j, bool) or not isinstance(j, (int, np.integer)) or not 0 <= j < field.m:
        raise ValueError(f"Spatial index must be in [0, {field.m}), got {j!r}")
    return int(j)


def _rv_scale(n):
    # 1 / (n √Δ_n) with Δ_n = 1/n
    return 1.0 / math.sqrt(n)


def _warn_dense_grid(field):
    if field.m > math.sqrt(field.n):
        logger.warning(f"m={field.m} exceeds sqrt(n)={math.sqrt(field.n):.1f}: "
                       f"the sqrt(mn) rate is not guaranteed in this regime")


def realized_volatility(field, j):
    """RV_n(y_j) = (1/(n√Δ_n)) Σ_i (Δ_iX)²(y_j)"""
    j = _check_index(field, j)
    column = increments(field)[:, j]
    return float(np.sum(column ** 2) * _rv_scale(field.n))


def realized_volatility_profile(field):
    """RV_n(y_j) for every spatial point"""
    return np.sum(increments(field) ** 2, axis=0) * _rv_scale(field.n)


def sigma2_single(field, j, params):
    """σ̂²_y = √(πθ2) exp(yθ1/θ2) RV_n(y) at y = y_j"""
    j = _check_index(field, j)
    y = field.grid.y[j]
    return math.sqrt(math.pi * params.theta2) * math.exp(y * params.kappa) * realized_volatility(field, j)


def _sigma2_per_point(field, params):
    y = field.grid.y_array()
    return math.sqrt(math.pi * params.theta2) * np.exp(y * params.kappa) * realized_volatility_profile(field)


def sigma2_multi(field, params, warn=True):
    """Spatial average of σ̂²_{y_j} over all observed points"""
    if warn:
        _warn_dense_grid(field)
    return float(np.mean(_sigma2_per_point(field, params)))


def quarticity(field, params):
    """(θ2π/(3m)) Σ_j Σ_i (Δ_iX)⁴(y_j) exp(2y_jθ1/θ2), consistent for ∫σ⁴"""
    y = field.grid.y_array()
    fourth = np.sum(increments(field) ** 4, axis=0)
    return float(params.theta2 * math.pi / (3 * field.m) * np.sum(fourth * np.exp(2 * y * params.kappa)))


def feasible_ci(sigma2_hat, quart_hat, n, m, level=0.95):
    """Confidence interval from the feasible CLT with variance πΓσ̃⁴/(mn)"""
    if quart_hat < 0:
        raise ValueError(f"Quarticity estimate must be non-negative, got {quart_hat}")
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be positive, got n={n}, m={m}")
    z = two_sided_critical(level)
    stderr = math.sqrt(math.pi * gamma_constant() * quart_hat / (m * n))
    half_width = z * stderr
    return EstimateWithCI(point=float(sigma2_hat), stderr=stderr, level=float(level),
                          ci=(sigma2_hat - half_width, sigma2_hat + half_width), n_obs=int(m * n))


def curvature_logratio(field, j1=None, j2=None):
    """
    Log-ratio curvature estimator

        κ̃ = [log Σ(Δ_iX)²(y_1) - log Σ(Δ_iX)²(y_2)] / (y_2 - y_1)

    Defaults to the outermost grid points. Symmetric in (j1, j2).
    """
    if j1 is None and j2 is None:
        j1, j2 = 0, field.m - 1
    elif j1 is None or j2 is None:
        raise ValueError("Give both spatial indices or neither")
    j1 = _check_index(field, j1)
    j2 = _check_index(field, j2)
    if j1 == j2:
        raise ValueError("curvature_logratio needs two distinct spatial points")

    sums = np.sum(increments(field)[:, [j1, j2]] ** 2, axis=0)
    if np.any(sums <= 0):
        raise DegenerateIncrementsError("degenerate increments")
    y1, y2 = field.grid.y[j1], field.grid.y[j2]
    return float((math.log(sums[0]) - math.log(sums[1])) / (y2 - y1))


def empirical_autocorrelation(field, j, max_lag):
    """Sample autocorrelations of (Δ_iX(y_j))_i at lags 1..max_lag"""
    j = _check_index(field, j)
    if not 1 <= max_lag < field.n:
        raise ValueError(f"max_lag must be in [1, n), got {max_lag}")
    x = increments(field)[:, j]
    x = x - x.mean()
    gamma0 = np.dot(x, x)
    if gamma0 == 0:
        return np.zeros(max_lag)
    return np.array([np.dot(x[:-h], x[h:]) / gamma0 for h in range(1, max_lag + 1)])


def volatility_report(field, params, level=0.95):
    """Assemble the estimate report: σ̂², σ̃⁴, interval, κ̃ and per-point figures"""
    sigma2 = sigma2_multi(field, params)
    quart = quarticity(field, params)
    ci = feasible_ci(sigma2, quart, field.n, field.m, level)
    rv = realized_volatility_profile(field)
    per_point_sigma2 = _sigma2_per_point(field, params)

    per_point = []
    for j, y in enumerate(field.grid.y):
        point_quart = params.theta2 * math.pi / 3 * float(
            np.sum(increments(field)[:, j] ** 4)) * math.exp(2 * y * params.kappa)
        point_ci = feasible_ci(per_point_sigma2[j], point_quart, field.n, 1, level)
        per_point.append({
            "y": y,
            "rv": float(rv[j]),
            "sigma2": float(per_point_sigma2[j]),
            "ci": {"lo": point_ci.ci[0], "hi": point_ci.ci[1]},
        })

    curvature = None
    if field.m >= 2:
        try:
            curvature = curvature_logratio(field)
        except DegenerateIncrementsError:
            logger.warning("Squared increments vanish, curvature estimate omitted")

    return {
        "sigma2": sigma2,
        "quarticity": quart,
        "ci": {"lo": ci.ci[0], "hi": ci.ci[1], "level": ci.level, "stderr": ci.stderr},
        "curvature_logratio": curvature,
        "n": field.n,
        "m": field.m,
        "per_point": per_point,
    }
