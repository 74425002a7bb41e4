"""
Exact spectral simulation of the SPDE on a discrete sampling grid

Each coordinate process x_k is an Ornstein-Uhlenbeck process with rate λ_k,
simulated through its exact Gaussian transition

    x(t+τ) = x(t) e^{-λτ} + σ(t) √((1 - e^{-2λτ}) / (2λ)) · N,

and the observed field is the truncated factor model
X_{t_i}(y_j) = Σ_{k≤K} x_k(t_i) e_k(y_j).
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from typing import Optional, Tuple

import numpy as np

from spdevol.model import (
    NonDissipativeModeError,
    OperatorParams,
    VolatilitySpec,
)
from spdevol.utils.streams import check_seed, mode_stream, worker_count

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 10_000
MODE_BLOCK = 1024
INITIAL_CONDITIONS = ("zero", "stationary")
SMALL_RATE = 1e-8


@dataclass(frozen=True)
class SamplingGrid:
    """Time step Δ_n = 1/n on [0, 1] and interior spatial points y_1 < ... < y_m"""

    n: int
    y: Tuple[float, ...]

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"Number of time steps must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        y = tuple(float(v) for v in np.atleast_1d(np.asarray(self.y, dtype=float)))
        if not y:
            raise ValueError("Sampling grid needs at least one spatial point")
        if not all(math.isfinite(v) and 0 < v < 1 for v in y):
            raise ValueError(f"Spatial points must lie strictly inside (0, 1), got {y}")
        if any(b <= a for a, b in zip(y, y[1:])):
            raise ValueError(f"Spatial points must be strictly increasing, got {y}")
        object.__setattr__(self, "y", y)

    @classmethod
    def equispaced(cls, n, m):
        """y_j = j/(m+1), j = 1..m"""
        if m < 1:
            raise ValueError(f"Number of spatial points must be positive, got {m}")
        return cls(n=n, y=tuple(j / (m + 1) for j in range(1, m + 1)))

    @property
    def m(self):
        return len(self.y)

    @property
    def delta_n(self):
        return 1.0 / self.n

    @property
    def delta_margin(self):
        """min_j min(y_j, 1 - y_j)"""
        return min(min(v, 1 - v) for v in self.y)

    @property
    def times(self):
        return np.arange(self.n + 1) / self.n

    def y_array(self):
        return np.asarray(self.y, dtype=float)


@dataclass(frozen=True)
class SimulationConfig:
    cutoff_K: int = DEFAULT_CUTOFF
    seed: int = 0
    initial_condition: str = "zero"
    refinement: int = 1

    def __post_init__(self):
        for name in ("cutoff_K", "refinement"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        object.__setattr__(self, "seed", check_seed(self.seed))
        if self.initial_condition not in INITIAL_CONDITIONS:
            raise ValueError(f"Initial condition must be one of {INITIAL_CONDITIONS}, got {self.initial_condition!r}")

    def to_dict(self):
        return {
            "K": self.cutoff_K,
            "seed": self.seed,
            "initial_condition": self.initial_condition,
            "refinement": self.refinement,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            cutoff_K=data.get("K", DEFAULT_CUTOFF),
            seed=data.get("seed", 0),
            initial_condition=data.get("initial_condition", "zero"),
            refinement=data.get("refinement", 1),
        )


@dataclass(frozen=True)
class FieldSample:
    """Observed matrix X_{t_i}(y_j), i = 0..n, with provenance"""

    values: np.ndarray = dataclass_field(repr=False)
    grid: SamplingGrid
    params: Optional[OperatorParams] = None
    vol: Optional[VolatilitySpec] = None
    config: Optional[SimulationConfig] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        expected = (self.grid.n + 1, self.grid.m)
        if values.shape != expected:
            raise ValueError(f"Field shape {values.shape} does not match grid {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Field contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.grid.n

    @property
    def m(self):
        return self.grid.m

    def scaled(self, c):
        """Same sample with values multiplied by c"""
        return FieldSample(self.values * c, self.grid, self.params, self.vol, self.config)


def _transition_variance(lams, tau):
    """(1 - e^{-2λτ}) / (2λ), with the λ → 0 limit τ"""
    lams = np.asarray(lams, dtype=float)
    x = lams * tau
    small = np.abs(x) < SMALL_RATE
    safe = np.where(small, 1.0, lams)
    exact = -np.expm1(-2 * safe * tau) / (2 * safe)
    return np.where(small, tau * (1 - x), exact)


def _ou_block(lams, vol, n, refinement, x0, normals):
    """
    Exact OU recursion for a block of modes sharing one time grid

    Args:
        lams: rates, shape (B,)
        x0: initial values, shape (B,)
        normals: standard normals, shape (B, n*refinement), consumed in time order

    Returns:
        paths at the observation times i/n, shape (B, n+1)
    """
    tau = 1.0 / (n * refinement)
    steps = n * refinement
    decay = np.exp(-lams * tau)
    unit_std = np.sqrt(_transition_variance(lams, tau))
    if vol.is_constant:
        sigmas = np.full(steps, vol.sigma)
    else:
        # frozen at the left endpoint of each sub-step
        sigmas = np.asarray(vol.at(np.arange(steps) * tau), dtype=float)

    noise = np.ascontiguousarray(normals.T)
    paths = np.empty((n + 1, lams.shape[0]))
    x = np.array(x0, dtype=float)
    paths[0] = x
    for step in range(steps):
        x = x * decay + (sigmas[step] * unit_std) * noise[step]
        if (step + 1) % refinement == 0:
            paths[(step + 1) // refinement] = x
    return paths.T


def ou_exact_path(lam, vol, n, refinement, x0, rng_stream):
    """
    Exact OU path observed at i/n, i = 0..n

    Draws exactly n*refinement standard normals from rng_stream.
    """
    if n < 1 or refinement < 1:
        raise ValueError(f"n and refinement must be positive, got n={n}, refinement={refinement}")
    normals = rng_stream.standard_normal(n * refinement)
    path = _ou_block(np.array([float(lam)]), vol, n, refinement, np.array([float(x0)]), normals[None, :])
    return path[0]


def _check_rates(params, config):
    lam1 = params.eigenvalue_offset + math.pi ** 2 * params.theta2
    if lam1 <= 0:
        if config.initial_condition == "stationary":
            raise NonDissipativeModeError(
                f"non-dissipative mode, stationary law undefined (lambda_1={lam1:.6g})")
        logger.warning(f"lambda_1={lam1:.6g} <= 0: simulating non-dissipative modes from zero, "
                       f"estimator guarantees do not apply")


def _mode_block(params, vol, grid, config, k_start, k_stop, basis_y):
    """Contribution of modes k_start..k_stop (inclusive) to the field"""
    ks = np.arange(k_start, k_stop + 1)
    lams = params.eigenvalue_offset + np.pi ** 2 * ks.astype(float) ** 2 * params.theta2
    steps = grid.n * config.refinement
    normals = np.empty((ks.shape[0], steps))
    x0 = np.zeros(ks.shape[0])
    stationary = config.initial_condition == "stationary"
    sigma0 = float(vol.at(0.0)) if stationary else 0.0
    for row, k in enumerate(ks):
        stream = mode_stream(config.seed, k)
        if stationary:
            x0[row] = math.sqrt(sigma0 ** 2 / (2 * lams[row])) * stream.standard_normal()
        normals[row] = stream.standard_normal(steps)
    paths = _ou_block(lams, vol, grid.n, config.refinement, x0, normals)
    basis = np.sqrt(2.0) * np.sin(np.pi * ks[:, None] * basis_y[None, :]) * \
        np.exp(-params.kappa * basis_y / 2)[None, :]
    return paths.T @ basis


def partial_field(params, vol, grid, config, k_start, k_stop, threads=None):
    """Σ_{k=k_start}^{k_stop} x_k(t_i) e_k(y_j) with the per-mode streams of config.seed"""
    if not 1 <= k_start <= k_stop:
        raise ValueError(f"Invalid mode range [{k_start}, {k_stop}]")
    _check_rates(params, config)
    y = grid.y_array()
    blocks = [(start, min(start + MODE_BLOCK - 1, k_stop))
              for start in range(k_start, k_stop + 1, MODE_BLOCK)]
    workers = min(worker_count(threads), len(blocks))
    logger.debug(f"Synthesizing modes {k_start}..{k_stop} in {len(blocks)} blocks on {workers} threads")

    if workers == 1:
        partials = [_mode_block(params, vol, grid, config, a, b, y) for a, b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda ab: _mode_block(params, vol, grid, config, ab[0], ab[1], y), blocks))

    # fixed summation order keeps the result independent of the schedule
    total = np.zeros((grid.n + 1, grid.m))
    for part in partials:
        total += part
    return total


def synthesize_field(params, vol, grid, config, threads=None, warn=True):
    """Simulate the observed field X_{t_i}(y_j) with cutoff config.cutoff_K"""
    if warn and config.cutoff_K < 10 * grid.n:
        logger.warning(f"Cutoff K={config.cutoff_K} < 10*n={10 * grid.n}: "
                       f"expect a negative bias from spectral truncation")
    logger.debug(f"Simulating field: n={grid.n}, m={grid.m}, K={config.cutoff_K}, "
                 f"seed={config.seed}, init={config.initial_condition}")
    values = partial_field(params, vol, grid, config, 1, config.cutoff_K, threads=threads)
    return FieldSample(values=values, grid=grid, params=params, vol=vol, config=config)


def increments(field):
    """Δ_iX(y_j) = X_{t_i}(y_j) - X_{t_{i-1}}(y_j), shape (n, m)"""
    values = field.values if isinstance(field, FieldSample) else np.asarray(field, dtype=float)
    if values.shape[0] < 2:
        raise ValueError("Need at least two observation times to form increments")
    return np.diff(values, axis=0)
