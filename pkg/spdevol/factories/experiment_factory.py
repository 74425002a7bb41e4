import logging

from spdevol.factories.model_factory import ModelFactory

logger = logging.getLogger(__name__)

EXPERIMENT_DEFAULTS = {
    "n": 1000,
    "m": 9,
    "K": 10000,
    "refinement": 1,
    "replications": 3000,
    "seed": 0,
    "initial_condition": "zero",
    "level": 0.95,
}


class ExperimentFactory:
    """Factory for Monte Carlo experiment configurations"""

    @staticmethod
    def create(config, **overrides):
        """
        Build an ExperimentConfig from a configuration dictionary

        Keyword overrides that are not None replace the corresponding entry.
        """
        # deferred: the harness pulls in pandas and scipy.stats
        from spdevol.harness import ESTIMATORS, ExperimentConfig

        try:
            merged = {**EXPERIMENT_DEFAULTS, **config}
            merged.update({key: value for key, value in overrides.items() if value is not None})
            if not isinstance(merged.get("params"), dict) or not isinstance(merged.get("vol"), dict):
                raise ValueError("Experiment configuration needs 'params' and 'vol' objects")

            cfg = ExperimentConfig(
                params=ModelFactory.create_params(merged["params"]),
                vol=ModelFactory.create_volatility(merged["vol"]),
                n=merged["n"],
                m=merged["m"],
                K=merged["K"],
                refinement=merged["refinement"],
                replications=merged["replications"],
                seed=merged["seed"],
                initial_condition=merged["initial_condition"],
                y=tuple(merged["y"]) if merged.get("y") is not None else None,
                estimators=tuple(merged.get("estimators", ESTIMATORS)),
                level=merged["level"],
            )
            logger.info(f"Experiment: n={cfg.n}, m={cfg.m}, K={cfg.K}, replications={cfg.replications}, "
                        f"seed={cfg.seed}, estimators={', '.join(cfg.estimators) or 'none'}")
            return cfg

        except Exception as e:
            logger.error(f"Error creating experiment configuration: {e}")
            raise
