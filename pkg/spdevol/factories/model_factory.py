import logging

from spdevol.model import OperatorParams, VolatilitySpec
from spdevol.simulate import SamplingGrid, SimulationConfig

logger = logging.getLogger(__name__)


class ModelFactory:
    """Factory for building model objects from configuration dictionaries"""

    @staticmethod
    def create_params(data):
        """Create OperatorParams from {"theta0", "theta1", "theta2"}"""
        try:
            params = OperatorParams.from_dict(data)
            logger.info(f"Operator parameters: theta=({params.theta0}, {params.theta1}, {params.theta2}), "
                        f"kappa={params.kappa:.6g}")
            return params

        except Exception as e:
            logger.error(f"Error creating operator parameters: {e}")
            raise

    @staticmethod
    def create_volatility(data):
        """Create a VolatilitySpec from {"kind": "constant", "sigma": ...} or a named profile"""
        try:
            vol = VolatilitySpec.from_dict(data)
            if vol.is_constant:
                logger.info(f"Volatility: constant sigma={vol.sigma}")
            else:
                logger.info(f"Volatility: {vol.name} profile")
            return vol

        except Exception as e:
            logger.error(f"Error creating volatility: {e}")
            raise

    @staticmethod
    def create_grid(n, m=None, y=None):
        """Explicit spatial points when y is given, else y_j = j/(m+1)"""
        try:
            grid = SamplingGrid(n=n, y=tuple(y)) if y is not None else SamplingGrid.equispaced(n, m)
            logger.debug(f"Sampling grid: n={grid.n}, m={grid.m}")
            return grid

        except Exception as e:
            logger.error(f"Error creating sampling grid: {e}")
            raise

    @staticmethod
    def create_simulation_config(config):
        try:
            sim = SimulationConfig.from_dict(config)
            logger.debug(f"Simulation config: {sim.to_dict()}")
            return sim

        except Exception as e:
            logger.error(f"Error creating simulation config: {e}")
            raise
