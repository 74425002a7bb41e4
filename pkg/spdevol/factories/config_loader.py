import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "spdevol_config.json"


class ConfigLoader:
    """Loads JSON configuration and parameter files with validation"""

    @staticmethod
    def resolve_path(config_file):
        """Project root first, then the path as given (relative to the current directory)"""
        project_root = Path(__file__).parent.parent.parent
        config_path = project_root / config_file
        if not config_path.exists():
            config_path = Path(config_file)
        if not config_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_file}")
        return config_path

    @staticmethod
    def load_json(path):
        """Load a JSON document (params, volatility or experiment file)"""
        try:
            with open(ConfigLoader.resolve_path(path), 'r') as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in {path}: {e}")
            raise

    @staticmethod
    def load_config(config_file=DEFAULT_CONFIG):
        """Load and validate the toolkit configuration"""
        try:
            config_path = ConfigLoader.resolve_path(config_file)
            with open(config_path, 'r') as f:
                config = json.load(f)

            ConfigLoader._validate_config(config)

            logger.debug(f"Configuration loaded from: {config_path}")
            return config

        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in configuration file: {e}")
            raise
        except Exception as e:
            logger.error(f"Failed to load configuration: {e}")
            raise

    @staticmethod
    def _validate_config(config):
        """Validate configuration has required fields"""
        if not isinstance(config, dict):
            raise ValueError("Configuration must be a JSON object")

        required_fields = ["params", "vol", "n", "m", "K", "seed"]
        for field in required_fields:
            if field not in config:
                raise ValueError(f"Missing required configuration field: {field}")

        for field in ("theta0", "theta1", "theta2"):
            if field not in config["params"]:
                raise ValueError(f"Missing required params field: {field}")

        if "kind" not in config["vol"]:
            raise ValueError("Missing required vol field: kind")

        logger.debug("Configuration validation passed")
