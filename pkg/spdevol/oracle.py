"""
Closed-form moments of the K-mode model and their first-order expansions

Each increment of a coordinate process splits as Δ_i x_k = A_{i,k} + B_{i,k} + C_{i,k}:
A carries the initial condition, B the noise accumulated before t_{i-1},
C the noise on (t_{i-1}, t_i]. The kernels below are the covariances of
those terms for constant σ. Summing them against e_k²(y) gives the exact
covariance of the observed increments, which is what the simulator samples.
"""

import math
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from spdevol.model import (
    NonDissipativeModeError,
    OperatorParams,
    eigenfunctions,
    eigenvalue,
    eigenvalues,
)
from spdevol.simulate import DEFAULT_CUTOFF, INITIAL_CONDITIONS, SMALL_RATE

logger = logging.getLogger(__name__)

GAMMA_TOL = 1e-12
ORACLE_BLOCK = 1024


@dataclass(frozen=True)
class KernelParams:
    """Constant-volatility K-mode model observed with time step delta_n"""

    params: OperatorParams
    sigma: float
    delta_n: float
    K: int = DEFAULT_CUTOFF

    def __post_init__(self):
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be a finite number >= 0, got {self.sigma}")
        if not math.isfinite(self.delta_n) or self.delta_n <= 0:
            raise ValueError(f"delta_n must be positive, got {self.delta_n}")
        if isinstance(self.K, bool) or not isinstance(self.K, (int, np.integer)) or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "delta_n", float(self.delta_n))
        object.__setattr__(self, "K", int(self.K))

    @classmethod
    def for_grid(cls, params, sigma, n, K=DEFAULT_CUTOFF):
        return cls(params=params, sigma=sigma, delta_n=1.0 / n, K=K)


@dataclass(frozen=True)
class GammaSeries:
    gamma: float
    series_sum: float
    terms: int
    tail_bound: float

    def to_dict(self):
        return {"gamma": self.gamma, "S": self.series_sum, "terms": self.terms, "tail_bound": self.tail_bound}


def _check_steps(*indices):
    for i in indices:
        if isinstance(i, bool) or not isinstance(i, (int, np.integer)) or i < 1:
            raise ValueError(f"Time indices must be integers >= 1, got {i!r}")


def _check_init(init):
    if init not in INITIAL_CONDITIONS:
        raise ValueError(f"Initial condition must be one of {INITIAL_CONDITIONS}, got {init!r}")


def _decay_ratio(lams, x):
    """(1 - e^{-λx}) / λ, with limit x(1 - λx/2) for small λx"""
    lams = np.asarray(lams, dtype=float)
    small = np.abs(lams * x) < SMALL_RATE
    safe = np.where(small, 1.0, lams)
    return np.where(small, x * (1 - lams * x / 2), -np.expm1(-safe * x) / safe)


# vectorised over λ; i, j are scalar time indices

def _kernel_B(lams, sigma, delta, i, j):
    gap = abs(i - j) * delta
    return (np.exp(-lams * gap) * _decay_ratio(lams, 2 * (min(i, j) - 1) * delta)
            * np.expm1(-lams * delta) ** 2 * sigma ** 2 / 2)


def _kernel_C(lams, sigma, delta, i, j):
    if i != j:
        return np.zeros_like(np.asarray(lams, dtype=float))
    return sigma ** 2 * _decay_ratio(lams, 2 * delta) / 2


def _kernel_BC(lams, sigma, delta, i, j):
    if i >= j:
        return np.zeros_like(np.asarray(lams, dtype=float))
    # e^{-λ(j-i)Δ} sinh(λΔ)/λ = e^{-λ(j-i-1)Δ} (1 - e^{-2λΔ}) / (2λ)
    return (np.exp(-lams * (j - i - 1) * delta) * _decay_ratio(lams, 2 * delta) / 2
            * np.expm1(-lams * delta) * sigma ** 2)


def _kernel_B_stationary(lams, sigma, delta, i, j):
    if np.any(np.asarray(lams) <= 0):
        raise NonDissipativeModeError("non-dissipative mode, stationary law undefined")
    return sigma ** 2 * np.expm1(-lams * delta) ** 2 * np.exp(-lams * abs(i - j) * delta) / (2 * lams)


def kernel_B(kp, i, j, k):
    """cov(B_{i,k}, B_{j,k}) under the zero initial condition"""
    _check_steps(i, j)
    return float(_kernel_B(eigenvalue(kp.params, k), kp.sigma, kp.delta_n, i, j))


def kernel_C(kp, i, j, k):
    """cov(C_{i,k}, C_{j,k}), non-zero only on the diagonal"""
    _check_steps(i, j)
    return float(_kernel_C(eigenvalue(kp.params, k), kp.sigma, kp.delta_n, i, j))


def kernel_BC(kp, i, j, k):
    """cov(C_{i,k}, B_{j,k}), non-zero only for i < j"""
    _check_steps(i, j)
    return float(_kernel_BC(eigenvalue(kp.params, k), kp.sigma, kp.delta_n, i, j))


def kernel_B_stationary(kp, i, j, k):
    """cov(B̃_{i,k}, B̃_{j,k}) with the initial condition drawn from the stationary law"""
    _check_steps(i, j)
    lam = eigenvalue(kp.params, k)
    if lam <= 0:
        raise NonDissipativeModeError(
            f"non-dissipative mode, stationary law undefined (k={k}, lambda={lam:.6g})")
    return float(_kernel_B_stationary(lam, kp.sigma, kp.delta_n, i, j))


def _check_y(y):
    if not 0 < y < 1:
        raise ValueError(f"Spatial coordinate must lie strictly inside (0, 1), got {y}")


def _mode_weights(kp, y):
    """λ_k and e_k²(y) for k = 1..K"""
    lams = eigenvalues(kp.params, kp.K)
    weights = eigenfunctions(kp.params, kp.K, [y])[:, 0] ** 2
    return lams, weights


def _check_stationary(lams, init):
    if init == "stationary" and lams[0] <= 0:
        raise NonDissipativeModeError(
            f"non-dissipative mode, stationary law undefined (lambda_1={lams[0]:.6g})")


def _increment_cov(lams, weights, sigma, delta, i, j, init):
    b_kernel = _kernel_B_stationary if init == "stationary" else _kernel_B
    total = (b_kernel(lams, sigma, delta, i, j)
             + _kernel_BC(lams, sigma, delta, i, j)
             + _kernel_BC(lams, sigma, delta, j, i)
             + _kernel_C(lams, sigma, delta, i, j))
    return float(np.dot(total, weights))


def increment_cov_exact(kp, i, j, y, init="zero"):
    """Exact cov(Δ_iX(y), Δ_jX(y)) of the K-mode model"""
    _check_steps(i, j)
    _check_y(y)
    _check_init(init)
    lams, weights = _mode_weights(kp, y)
    _check_stationary(lams, init)
    return _increment_cov(lams, weights, kp.sigma, kp.delta_n, i, j, init)


def exact_increment_covariance_matrix(kp, n0, y, init="zero"):
    """Matrix {cov(Δ_iX(y), Δ_jX(y))}_{i,j=1..n0}"""
    _check_steps(n0)
    _check_y(y)
    _check_init(init)
    lams, weights = _mode_weights(kp, y)
    _check_stationary(lams, init)

    cov = np.empty((n0, n0))
    for i in range(1, n0 + 1):
        for j in range(i, n0 + 1):
            cov[i - 1, j - 1] = cov[j - 1, i - 1] = _increment_cov(
                lams, weights, kp.sigma, kp.delta_n, i, j, init)
    return cov


def expected_sq_increment_exact(kp, i, y):
    """
    E[(Δ_iX)²(y)] for the zero initial condition

        σ² Σ_k (1 - e^{-λ_kΔ})/λ_k · (1 - (1 - e^{-λ_kΔ})/2 · e^{-2λ_k t_{i-1}}) e_k²(y)
    """
    _check_steps(i)
    _check_y(y)
    lams, weights = _mode_weights(kp, y)
    return float(np.dot(_sq_increment_terms(lams, kp.delta_n, np.array([i]))[:, 0], weights) * kp.sigma ** 2)


def _sq_increment_terms(lams, delta, steps):
    """Per-mode factors of E[(Δ_iX)²]/σ² for zero init, shape (len(lams), len(steps))"""
    ratio = _decay_ratio(lams, delta)[:, None]
    one_minus = -np.expm1(-lams * delta)[:, None]
    t_prev = (steps[None, :] - 1) * delta
    return ratio * (1 - one_minus / 2 * np.exp(-2 * lams[:, None] * t_prev))


def expected_realized_volatility(kp, y, n, init="zero"):
    """Exact E[RV_n(y)] = (1/n) Σ_i E[(Δ_iX)²(y)] / √Δ for the K-mode model"""
    _check_steps(n)
    _check_y(y)
    _check_init(init)
    lams, weights = _mode_weights(kp, y)
    _check_stationary(lams, init)
    delta = kp.delta_n

    if init == "stationary":
        # increments are stationary: the B̃ + C diagonal does not depend on i
        per_mode = _kernel_B_stationary(lams, kp.sigma, delta, 1, 1) + _kernel_C(lams, kp.sigma, delta, 1, 1)
        mean_sq = float(np.dot(per_mode, weights))
    else:
        steps = np.arange(1, n + 1)
        total = 0.0
        for start in range(0, kp.K, ORACLE_BLOCK):
            block = slice(start, start + ORACLE_BLOCK)
            terms = _sq_increment_terms(lams[block], delta, steps)
            total += float(np.sum(terms.mean(axis=1) * weights[block]))
        mean_sq = kp.sigma ** 2 * total
    return mean_sq / math.sqrt(delta)


def first_order_sq_increment(params, sigma2, y, delta_n):
    """Leading term √Δ e^{-yθ1/θ2} σ²/√(θ2π) of E[(Δ_iX)²(y)]"""
    return math.sqrt(delta_n) * math.exp(-y * params.kappa) * sigma2 / math.sqrt(params.theta2 * math.pi)


def _lag_factor(h):
    return 2 * math.sqrt(h) - math.sqrt(h - 1) - math.sqrt(h + 1)


def first_order_cov(params, sigma2, y, delta_n, lag):
    """Leading term of cov(Δ_iX(y), Δ_jX(y)) at |j - i| = lag"""
    _check_steps(lag)
    return -first_order_sq_increment(params, sigma2, y, delta_n) / 2 * _lag_factor(lag)


def theoretical_autocorrelation(lag):
    """-(2√h - √(h-1) - √(h+1))/2"""
    _check_steps(lag)
    return -_lag_factor(lag) / 2


def autocorrelation_partial_sum(H):
    """Σ_{h≤H} theoretical_autocorrelation(h) in closed form"""
    _check_steps(H)
    return -(1 + math.sqrt(H) - math.sqrt(H + 1)) / 2


def series_term(r):
    """I(r) = 2√(r+1) - √(r+2) - √r, evaluated without cancellation"""
    r = np.asarray(r, dtype=float)
    s0, s1, s2 = np.sqrt(r), np.sqrt(r + 1), np.sqrt(r + 2)
    return 2.0 / ((s2 + s0) * (s1 + s0) * (s2 + s1))


def series_tail_bound(R):
    """Upper bound on Σ_{r≥R} I(r)², from I(r) ≤ r^{-3/2}/4"""
    if R < 2:
        return math.inf
    return (R - 1) ** -2 / 32


def gamma_series(tol=GAMMA_TOL):
    """Γ = (S + 2)/π with S = Σ_{r≥0} I(r)² truncated once the tail bound drops below tol"""
    if not tol > 0:
        raise ValueError(f"Tolerance must be positive, got {tol}")
    terms = int(math.ceil(1 / math.sqrt(32 * tol))) + 1
    series_sum = float(np.sum(series_term(np.arange(terms)) ** 2))
    tail = series_tail_bound(terms)
    logger.debug(f"Gamma series: {terms} terms, tail bound {tail:.3g}")
    return GammaSeries(gamma=(series_sum + 2) / math.pi, series_sum=series_sum, terms=terms, tail_bound=tail)


@lru_cache(maxsize=16)
def gamma_constant(tol=GAMMA_TOL):
    return gamma_series(tol).gamma


def moment_report(kp, y, n, lags, steps, init="zero"):
    """First-order and exact moments at y for the CLI"""
    sigma2 = kp.sigma ** 2
    report = {
        "y": y,
        "n": n,
        "K": kp.K,
        "init": init,
        "first_order_sq_increment": first_order_sq_increment(kp.params, sigma2, y, kp.delta_n),
        "expected_realized_volatility": expected_realized_volatility(kp, y, n, init),
        "first_order_realized_volatility": first_order_sq_increment(kp.params, sigma2, y, kp.delta_n)
        / math.sqrt(kp.delta_n),
        "autocorrelation": [
            {
                "lag": h,
                "theory": theoretical_autocorrelation(h),
                "first_order_cov": first_order_cov(kp.params, sigma2, y, kp.delta_n, h),
            }
            for h in lags
        ],
        "sq_increment": [],
        "gamma": gamma_constant(),
    }
    for i in steps:
        entry = {"i": i, "exact_cov": increment_cov_exact(kp, i, i, y, init)}
        if init == "zero":
            entry["exact"] = expected_sq_increment_exact(kp, i, y)
        report["sq_increment"].append(entry)
    return report
