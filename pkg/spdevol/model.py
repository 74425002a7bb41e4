"""
SPDE parametrization and eigensystem

The differential operator A_θ = θ2 ∂²/∂y² + θ1 ∂/∂y + θ0 with Dirichlet
boundary conditions on [0, 1] has eigenfunctions

    e_k(y) = √2 sin(πky) exp(-y θ1 / (2θ2))

with eigenvalues -λ_k, λ_k = -θ0 + θ1²/(4θ2) + π²k²θ2. The e_k form an
orthonormal basis under the weighted scalar product
⟨f, g⟩_θ = ∫_0^1 exp(yθ1/θ2) f(y) g(y) dy.
"""

import math
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

logger = logging.getLogger(__name__)

MIN_QUAD_NODES = 16
VOLATILITY_CHECK_POINTS = 1001


class NonDissipativeModeError(ValueError):
    """Raised when a stationary law is requested for a mode with λ_k ≤ 0"""


@dataclass(frozen=True)
class OperatorParams:
    """Coefficients θ = (θ0, θ1, θ2) of the differential operator"""

    theta0: float
    theta1: float
    theta2: float

    def __post_init__(self):
        for name in ("theta0", "theta1", "theta2"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ValueError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, float(value))
        if self.theta2 <= 0:
            raise ValueError(f"theta2 must be strictly positive, got {self.theta2}")
        if not math.isfinite(self.theta1 / self.theta2):
            raise ValueError("curvature theta1/theta2 is not finite")

    @property
    def kappa(self):
        """Curvature parameter ϰ = θ1/θ2"""
        return self.theta1 / self.theta2

    @property
    def eigenvalue_offset(self):
        """λ_k - π²k²θ2, the k-independent part of every eigenvalue"""
        return -self.theta0 + self.theta1 ** 2 / (4 * self.theta2)

    def sigma0_squared(self, sigma2):
        """Normalized volatility σ²/√θ2 (IV₀ when given ∫σ²)"""
        return sigma2 / math.sqrt(self.theta2)

    def to_dict(self):
        return {"theta0": self.theta0, "theta1": self.theta1, "theta2": self.theta2}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["theta0"], data["theta1"], data["theta2"])
        except KeyError as e:
            raise ValueError(f"Missing operator parameter: {e.args[0]}") from None
        except TypeError:
            raise ValueError(f"Operator parameters must be a JSON object, got {data!r}") from None


@dataclass(frozen=True)
class EigenMode:
    k: int
    lam: float


def _check_mode_index(k):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"Mode index must be a positive integer, got {k!r}")
    return int(k)


def eigenvalue(params, k):
    """λ_k = -θ0 + θ1²/(4θ2) + π²k²θ2"""
    k = _check_mode_index(k)
    return params.eigenvalue_offset + math.pi ** 2 * k ** 2 * params.theta2


def eigenvalues(params, K):
    """Vector (λ_1, ..., λ_K)"""
    k = np.arange(1, _check_mode_index(K) + 1, dtype=float)
    return params.eigenvalue_offset + np.pi ** 2 * k ** 2 * params.theta2


def eigenmode(params, k):
    return EigenMode(k=_check_mode_index(k), lam=eigenvalue(params, k))


def eigenfunction(params, k, y):
    """e_k(y) = √2 sin(πky) exp(-yθ1/(2θ2)) for y in [0, 1]"""
    k = _check_mode_index(k)
    y_arr = np.asarray(y, dtype=float)
    if np.any((y_arr < 0) | (y_arr > 1)) or np.any(np.isnan(y_arr)):
        raise ValueError(f"Spatial coordinate must lie in [0, 1], got {y}")
    value = np.sqrt(2.0) * np.sin(np.pi * k * y_arr) * np.exp(-params.kappa * y_arr / 2)
    # sin(πk) is not exactly zero in floating point
    value = np.where((y_arr == 0) | (y_arr == 1), 0.0, value)
    if np.ndim(y) == 0:
        return float(value)
    return value


def eigenfunctions(params, K, y):
    """Matrix of e_k(y_j), shape (K, len(y)), rows indexed by k = 1..K"""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any((y_arr < 0) | (y_arr > 1)):
        raise ValueError("Spatial coordinates must lie in [0, 1]")
    k = np.arange(1, _check_mode_index(K) + 1, dtype=float)[:, None]
    basis = np.sqrt(2.0) * np.sin(np.pi * k * y_arr[None, :]) * np.exp(-params.kappa * y_arr / 2)[None, :]
    basis[:, (y_arr == 0) | (y_arr == 1)] = 0.0
    return basis


def inner_product_theta(params, f, g, quad_nodes):
    """Composite Simpson approximation of ⟨f, g⟩_θ on quad_nodes equispaced nodes"""
    if quad_nodes < MIN_QUAD_NODES:
        raise ValueError(f"Need at least {MIN_QUAD_NODES} quadrature nodes, got {quad_nodes}")
    y = np.linspace(0.0, 1.0, int(quad_nodes))
    integrand = np.exp(y * params.kappa) * np.asarray(f(y), dtype=float) * np.asarray(g(y), dtype=float)
    return float(integrate.simpson(integrand, x=y))


def gram_matrix(params, K, quad_nodes=4096):
    """Gram matrix of e_1..e_K under ⟨·,·⟩_θ"""
    if quad_nodes < MIN_QUAD_NODES:
        raise ValueError(f"Need at least {MIN_QUAD_NODES} quadrature nodes, got {quad_nodes}")
    y = np.linspace(0.0, 1.0, int(quad_nodes))
    basis = eigenfunctions(params, K, y)
    weighted = basis * np.exp(y * params.kappa)[None, :]
    products = weighted[:, None, :] * basis[None, :, :]
    return integrate.simpson(products, x=y, axis=-1)


def stationary_coeff_std(params, sigma, k):
    """Standard deviation √(σ²/(2λ_k)) of the k-th coefficient under the stationary law"""
    if sigma < 0:
        raise ValueError(f"Volatility must be non-negative, got {sigma}")
    if sigma == 0:
        return 0.0
    lam = eigenvalue(params, k)
    if lam <= 0:
        raise NonDissipativeModeError(
            f"non-dissipative mode, stationary law undefined (k={k}, lambda={lam:.6g})")
    return math.sqrt(sigma ** 2 / (2 * lam))


def sine_intraday(t):
    """Intraday volatility pattern σ_t = 1 - 0.2 sin(3πt/4)"""
    return 1.0 - 0.2 * np.sin(0.75 * np.pi * np.asarray(t, dtype=float))


# name -> (function, Hölder index)
VOLATILITY_PROFILES = {
    "sine-intraday": (sine_intraday, 1.0),
}


@dataclass(frozen=True)
class VolatilitySpec:
    """Constant σ or a deterministic, strictly positive σ(t) on [0, 1]"""

    kind: str
    sigma: Optional[float] = None
    sigma_fn: Optional[Callable] = None
    alpha: float = 1.0
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind == "constant":
            try:
                sigma = float(self.sigma)
            except (TypeError, ValueError):
                sigma = math.nan
            if isinstance(self.sigma, bool) or not math.isfinite(sigma) or sigma < 0:
                raise ValueError(f"Constant volatility must be a finite number >= 0, got {self.sigma!r}")
            object.__setattr__(self, "sigma", sigma)
        elif self.kind == "time-varying":
            if self.sigma_fn is None:
                raise ValueError("Time-varying volatility needs sigma_fn")
            if not 0.5 < self.alpha <= 1:
                raise ValueError(f"Hölder index must lie in (1/2, 1], got {self.alpha}")
            grid = np.linspace(0.0, 1.0, VOLATILITY_CHECK_POINTS)
            values = np.asarray(self.sigma_fn(grid), dtype=float)
            if values.shape != grid.shape or not np.all(np.isfinite(values)) or np.any(values <= 0):
                raise ValueError("Time-varying volatility must be finite and strictly positive on [0, 1]")
        else:
            raise ValueError(f"Unknown volatility kind: {self.kind!r}")

    @classmethod
    def constant(cls, sigma):
        return cls(kind="constant", sigma=sigma)

    @classmethod
    def time_varying(cls, sigma_fn, alpha=1.0, name=None):
        return cls(kind="time-varying", sigma_fn=sigma_fn, alpha=alpha, name=name)

    @classmethod
    def named(cls, name):
        if name not in VOLATILITY_PROFILES:
            raise ValueError(f"Unknown volatility profile: {name!r}")
        fn, alpha = VOLATILITY_PROFILES[name]
        return cls.time_varying(fn, alpha=alpha, name=name)

    @property
    def is_constant(self):
        return self.kind == "constant"

    def at(self, t):
        """σ evaluated at time(s) t"""
        if self.is_constant:
            return np.full(np.shape(t), self.sigma) if np.ndim(t) else self.sigma
        value = self.sigma_fn(t)
        return value if np.ndim(t) else float(value)

    def integrated_variance(self):
        """∫_0^1 σ_s² ds"""
        if self.is_constant:
            return self.sigma ** 2
        return integrate.quad(lambda s: float(self.sigma_fn(s)) ** 2, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]

    def integrated_quarticity(self):
        """∫_0^1 σ_s⁴ ds"""
        if self.is_constant:
            return self.sigma ** 4
        return integrate.quad(lambda s: float(self.sigma_fn(s)) ** 4, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]

    def to_dict(self):
        if self.is_constant:
            return {"kind": "constant", "sigma": self.sigma}
        if self.name in VOLATILITY_PROFILES:
            return {"kind": self.name}
        raise ValueError("Only constant and named volatility profiles can be serialized")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "kind" not in data:
            raise ValueError(f"Volatility spec must be a JSON object with a 'kind' field, got {data!r}")
        kind = data["kind"]
        if kind == "constant":
            if "sigma" not in data:
                raise ValueError("Constant volatility spec needs 'sigma'")
            return cls.constant(data["sigma"])
        return cls.named(kind)
