from .logging_config import setup_logging
from .normal import norm_ppf, two_sided_critical

__all__ = ['setup_logging', 'norm_ppf', 'two_sided_critical']
