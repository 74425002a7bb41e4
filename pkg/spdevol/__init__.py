"""Simulation and estimation of volatility in a linear parabolic SPDE from discrete observations"""

from .model import OperatorParams, VolatilitySpec, NonDissipativeModeError
from .simulate import SamplingGrid, SimulationConfig, FieldSample, synthesize_field
from .estimate import DegenerateIncrementsError, EstimateWithCI
from .regress import RegressionData, RegressionFit, FitOptions, SingularDesignError
from .oracle import KernelParams, gamma_constant

__version__ = "1.0.0"

__all__ = [
    'OperatorParams', 'VolatilitySpec', 'NonDissipativeModeError',
    'SamplingGrid', 'SimulationConfig', 'FieldSample', 'synthesize_field',
    'DegenerateIncrementsError', 'EstimateWithCI',
    'RegressionData', 'RegressionFit', 'FitOptions', 'SingularDesignError',
    'KernelParams', 'gamma_constant',
]
