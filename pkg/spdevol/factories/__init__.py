from .config_loader import ConfigLoader
from .model_factory import ModelFactory
from .experiment_factory import ExperimentFactory

__all__ = ['ConfigLoader', 'ModelFactory', 'ExperimentFactory']
