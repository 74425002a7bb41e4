"""
Joint least-squares estimation of (IV₀, ϰ) from the spatial profile of
realized volatilities

    Z_j = RV_n(y_j) ≈ f_{IV₀,ϰ}(y_j) = (IV₀/√π) e^{-ϰ y_j}

fitted by Levenberg-Marquardt with an analytic Jacobian.
"""

import math
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from spdevol.estimate import realized_volatility_profile
from spdevol.oracle import gamma_constant

logger = logging.getLogger(__name__)

MODES = ("integral", "discrete")
DISCRETE_MODE_BELOW = 50
FALLBACK_START = (1.0, 1.0)
MIN_IV0 = 1e-12
MAX_DAMPING = 1e16
QUADRATURE_NODES = 64
SINGULAR_CONDITION = 1e12
SQRT_PI = math.sqrt(math.pi)


class SingularDesignError(ValueError):
    """Raised when V(η) is not invertible"""


@dataclass(frozen=True)
class RegressionData:
    """Z_j and y_j; n is the number of time steps behind Z (needed for the 1/(mn) scaling)"""

    z: Tuple[float, ...]
    y: Tuple[float, ...]
    n: Optional[int] = None

    def __post_init__(self):
        z = tuple(float(v) for v in np.atleast_1d(np.asarray(self.z, dtype=float)))
        y = tuple(float(v) for v in np.atleast_1d(np.asarray(self.y, dtype=float)))
        if len(z) != len(y):
            raise ValueError(f"z and y lengths differ: {len(z)} != {len(y)}")
        if not all(math.isfinite(v) for v in z + y):
            raise ValueError("Regression data must be finite")
        if any(b <= a for a, b in zip(y, y[1:])):
            raise ValueError("Spatial points must be strictly increasing")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)

    @property
    def m(self):
        return len(self.y)


@dataclass(frozen=True)
class FitOptions:
    start: Optional[Tuple[float, float]] = None
    max_iter: int = 100
    rtol: float = 1e-10
    gtol: float = 1e-12
    damping: float = 1e-3
    theta2: Optional[float] = None
    quart_integral: Optional[float] = None
    mode: Optional[str] = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")
        if self.damping <= 0:
            raise ValueError(f"Initial damping must be positive, got {self.damping}")
        if self.mode is not None and self.mode not in MODES:
            raise ValueError(f"Mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class RegressionFit:
    iv0_hat: float
    kappa_hat: float
    converged: bool
    iterations: int
    rss: float
    asym_cov: Optional[np.ndarray] = None
    stderr: Optional[Tuple[float, float]] = None
    rss_history: Tuple[float, ...] = ()

    def to_dict(self):
        return {
            "iv0_hat": self.iv0_hat,
            "kappa_hat": self.kappa_hat,
            "stderr": list(self.stderr) if self.stderr is not None else None,
            "cov": self.asym_cov.tolist() if self.asym_cov is not None else None,
            "converged": self.converged,
            "iterations": self.iterations,
            "rss": self.rss,
        }


def build_regression_data(field):
    """Z_j = RV_n(y_j) for every observed point"""
    if field.m < 2:
        raise ValueError("curvature not identifiable from one spatial point")
    return RegressionData(z=realized_volatility_profile(field), y=field.grid.y, n=field.n)


def model_f(iv0, kappa, y):
    """f_{IV₀,ϰ}(y) = (IV₀/√π) e^{-ϰy}"""
    value = iv0 / SQRT_PI * np.exp(-kappa * np.asarray(y, dtype=float))
    return float(value) if np.ndim(y) == 0 else value


def model_jacobian(iv0, kappa, y):
    """Columns ∂f/∂IV₀ = e^{-ϰy}/√π and ∂f/∂ϰ = -y IV₀ e^{-ϰy}/√π, shape (len(y), 2)"""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    base = np.exp(-kappa * y) / SQRT_PI
    return np.column_stack([base, -y * iv0 * base])


def initial_guess(data):
    """Log-linear regression of log Z_j on y_j, or (1, 1) with fewer than two positive Z_j"""
    z = np.asarray(data.z)
    y = np.asarray(data.y)
    positive = z > 0
    if np.count_nonzero(positive) < 2:
        logger.debug(f"Fewer than two positive Z_j, starting from {FALLBACK_START}")
        return FALLBACK_START
    slope, intercept = np.polyfit(y[positive], np.log(z[positive]), 1)
    return float(SQRT_PI * math.exp(intercept)), float(-slope)


def _rss(data, iv0, kappa):
    residual = np.asarray(data.z) - model_f(iv0, kappa, np.asarray(data.y))
    return residual, float(np.dot(residual, residual))


def fit_least_squares(data, opts=None):
    """
    Levenberg-Marquardt fit of (IV₀, ϰ)

    Damping starts at opts.damping, is multiplied by 10 on a rejected step
    and divided by 10 on an accepted one. IV₀ is projected onto (0, ∞).
    The fit has converged once the relative rss decrease or the step falls
    below rtol, or the gradient falls below gtol. Iteration goes on past a
    flat rss until the step test holds.
    Non-convergence is reported through RegressionFit.converged.
    """
    opts = opts or FitOptions()
    if data.m < 2:
        raise ValueError("curvature not identifiable from one spatial point")
    if np.all(np.asarray(data.z) <= 0):
        raise ValueError("All Z_j are non-positive, nothing to fit")

    iv0, kappa = opts.start if opts.start is not None else initial_guess(data)
    iv0 = max(float(iv0), MIN_IV0)
    kappa = float(kappa)
    y = np.asarray(data.y)
    residual, rss = _rss(data, iv0, kappa)
    history = [rss]
    damping = opts.damping
    converged = stalled = False
    iterations = 0

    while iterations < opts.max_iter:
        iterations += 1
        if rss == 0:
            converged = True
            break
        J = model_jacobian(iv0, kappa, y)
        rhs = J.T @ residual
        if np.linalg.norm(rhs) < opts.gtol:
            converged = True
            break

        normal = J.T @ J
        scaling = np.diag(np.maximum(np.diag(normal), np.finfo(float).tiny))
        try:
            step = np.linalg.solve(normal + damping * scaling, rhs)
        except np.linalg.LinAlgError:
            damping *= 10
            continue

        new_iv0 = max(iv0 + step[0], MIN_IV0)
        new_kappa = kappa + step[1]
        if math.hypot(new_iv0 - iv0, new_kappa - kappa) <= opts.rtol * (math.hypot(iv0, kappa) + opts.rtol):
            # step below working precision: already at the optimum
            converged = True
            break
        new_residual, new_rss = _rss(data, new_iv0, new_kappa)

        if new_rss <= rss:
            decrease = (rss - new_rss) / rss
            iv0, kappa, residual, rss = new_iv0, new_kappa, new_residual, new_rss
            history.append(rss)
            damping = max(damping / 10, np.finfo(float).eps)
            # flat rss counts as converged, but keep stepping until the step test holds
            stalled = stalled or decrease < opts.rtol
        else:
            damping *= 10
            if damping > MAX_DAMPING:
                # no descent direction left at working precision
                converged = np.linalg.norm(rhs) < math.sqrt(opts.gtol)
                break

    converged = converged or stalled
    if not converged:
        logger.warning(f"Least-squares fit did not converge after {iterations} iterations "
                       f"(rss={rss:.6g}), returning best iterate")
    logger.debug(f"LM fit: iv0={iv0:.8g}, kappa={kappa:.8g}, rss={rss:.3g}, iterations={iterations}")

    cov = stderr = None
    if opts.theta2 is not None and opts.quart_integral is not None:
        if data.n is None:
            logger.debug("Number of time steps unknown, asymptotic covariance omitted")
        else:
            mode = opts.mode or ("discrete" if data.m < DISCRETE_MODE_BELOW else "integral")
            cov = asymptotic_cov((iv0, kappa), opts.theta2, opts.quart_integral, data.y, mode) / (data.m * data.n)
            stderr = (float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1])))

    return RegressionFit(iv0_hat=iv0, kappa_hat=kappa, converged=converged, iterations=iterations,
                         rss=rss, asym_cov=cov, stderr=stderr, rss_history=tuple(history))


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"Mode must be one of {MODES}, got {mode!r}")


def _weighted_moments(rate, y_points, mode):
    """Means of (1, y, y²)·e^{-rate·y}: discrete over y_points or continuous over [y_1, y_m]"""
    _check_mode(mode)
    y = np.atleast_1d(np.asarray(y_points, dtype=float))
    if mode == "discrete":
        nodes, weights = y, np.full(y.shape, 1.0 / y.shape[0])
    else:
        a, b = float(y.min()), float(y.max())
        if b <= a:
            raise SingularDesignError("Integral mode needs an interval with y_1 < y_m")
        x, w = np.polynomial.legendre.leggauss(QUADRATURE_NODES)
        nodes = (b - a) / 2 * x + (a + b) / 2
        weights = w / 2
    h = np.exp(-rate * nodes)
    return tuple(float(np.dot(weights, nodes ** p * h)) for p in range(3))


def _design_matrix(eta, y_points, mode, factor):
    iv0, kappa = eta
    m0, m1, m2 = _weighted_moments(factor * kappa, y_points, mode)
    return np.array([[m0, -iv0 * m1], [-iv0 * m1, iv0 ** 2 * m2]])


def matrix_U(eta, y_points, mode="integral"):
    """
    U(η) with weight e^{-4ϰy}, averaged over the grid (discrete) or over [y_1, y_m] (integral)

    Integral mode is normalised by 1/(y_m - y_1): the m → ∞ limit of the
    discrete mean, not the bare integral over [y_1, y_m].
    """
    return _design_matrix(eta, y_points, mode, 4)


def matrix_V(eta, y_points, mode="integral"):
    """V(η) with weight e^{-2ϰy}, normalised like matrix_U"""
    return _design_matrix(eta, y_points, mode, 2)


def asymptotic_cov(eta, theta2, quart_integral, y_points, mode="integral"):
    """(Γπ/θ2) ∫σ⁴ V(η)⁻¹ U(η) V(η)⁻¹, the covariance of √(mn)((ÎV₀, κ̂) - (IV₀, ϰ))"""
    if theta2 <= 0:
        raise ValueError(f"theta2 must be positive, got {theta2}")
    if quart_integral < 0:
        raise ValueError(f"Integrated quarticity must be non-negative, got {quart_integral}")
    if mode == "discrete" and len(set(np.atleast_1d(y_points).tolist())) < 2:
        raise SingularDesignError("V is singular: fewer than two distinct spatial points")

    U = matrix_U(eta, y_points, mode)
    V = matrix_V(eta, y_points, mode)
    if not np.all(np.isfinite(V)) or np.linalg.cond(V) > SINGULAR_CONDITION:
        raise SingularDesignError(f"V is singular (condition number {np.linalg.cond(V):.3g})")
    V_inv = np.linalg.inv(V)
    cov = gamma_constant() * math.pi / theta2 * quart_integral * (V_inv @ U @ V_inv)
    return (cov + cov.T) / 2
