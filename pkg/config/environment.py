# config/environment.py
"""
Runtime configuration with validation: inference budgets, herding rates and
segmentation potentials, overridable through HERDCRF_* environment variables
or a .env file.
"""

import os
from typing import Dict, Any, Optional
from dataclasses import dataclass, field, asdict
from dotenv import load_dotenv
import logging

from utils.validation import ValidationError

logger = logging.getLogger(__name__)

ENV_PREFIX = "HERDCRF_"


@dataclass
class InferenceSettings:
    """MAP inference configuration"""
    method: str = "lbp"
    lbp_max_iterations: int = 200
    lbp_damping: float = 0.5
    lbp_tol: float = 1e-6
    bruteforce_limit: int = 10 ** 7
    elimination_table_limit: int = 10 ** 7


@dataclass
class HerdingSettings:
    """Default rates and sample counts for divMbest and Herding runs"""
    divmbest_lambda: float = 0.5
    eta_unary: float = 0.5
    eta_pairwise: float = 0.0
    num_samples: int = 20
    normalize_theta: bool = False


@dataclass
class SegmentationSettings:
    """CRF construction parameters for the segmentation harness"""
    sigmoid_a: float = -7.0
    sigmoid_b: float = 15.0
    potts_decay: float = 10.0
    potts_weight: float = 0.08
    interactive_potts_decay: float = 1.0
    interactive_potts_weight: float = 0.15
    probability_floor: float = 1e-8


@dataclass
class LoggingConfig:
    """Logging configuration"""
    level: str = "WARNING"
    log_dir: str = "logs"
    enable_file: bool = False


@dataclass
class ApplicationConfig:
    """Main application configuration"""
    threads: int = 1
    output_dir: str = "output"

    inference: InferenceSettings = field(default_factory=InferenceSettings)
    herding: HerdingSettings = field(default_factory=HerdingSettings)
    segmentation: SegmentationSettings = field(default_factory=SegmentationSettings)
    logging: LoggingConfig = field(default_factory=LoggingConfig)


class ConfigurationManager:
    """Loads, validates and exports the application configuration"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file or ".env"
        self.config = ApplicationConfig()
        try:
            self._load_configuration()
            self._validate_configuration()
        except ValidationError as ve:
            logger.error("Configuration validation error: %s", ve)
            raise

    def _load_configuration(self):
        """Load configuration from a .env file and the environment"""
        if os.path.exists(self.config_file):
            load_dotenv(self.config_file)
            logger.info("Loaded configuration from %s", self.config_file)

        self._load_from_environment()

    def _load_from_environment(self):
        """Load configuration values from HERDCRF_* environment variables"""
        cfg = self.config

        cfg.threads = self._get_int("THREADS", cfg.threads)
        cfg.output_dir = self._get_str("OUTPUT_DIR", cfg.output_dir)

        cfg.inference.method = self._get_str("INFERENCE", cfg.inference.method).lower()
        cfg.inference.lbp_max_iterations = self._get_int("LBP_MAX_ITERATIONS", cfg.inference.lbp_max_iterations)
        cfg.inference.lbp_damping = self._get_float("LBP_DAMPING", cfg.inference.lbp_damping)
        cfg.inference.lbp_tol = self._get_float("LBP_TOL", cfg.inference.lbp_tol)
        cfg.inference.bruteforce_limit = self._get_int("BRUTEFORCE_LIMIT", cfg.inference.bruteforce_limit)
        cfg.inference.elimination_table_limit = self._get_int(
            "ELIMINATION_TABLE_LIMIT", cfg.inference.elimination_table_limit
        )

        cfg.herding.divmbest_lambda = self._get_float("LAMBDA", cfg.herding.divmbest_lambda)
        cfg.herding.eta_unary = self._get_float("ETA_U", cfg.herding.eta_unary)
        cfg.herding.eta_pairwise = self._get_float("ETA_P", cfg.herding.eta_pairwise)
        cfg.herding.num_samples = self._get_int("NUM_SAMPLES", cfg.herding.num_samples)
        cfg.herding.normalize_theta = self._get_bool("NORMALIZE_THETA", cfg.herding.normalize_theta)

        cfg.segmentation.sigmoid_a = self._get_float("SIGMOID_A", cfg.segmentation.sigmoid_a)
        cfg.segmentation.sigmoid_b = self._get_float("SIGMOID_B", cfg.segmentation.sigmoid_b)
        cfg.segmentation.potts_decay = self._get_float("POTTS_DECAY", cfg.segmentation.potts_decay)
        cfg.segmentation.potts_weight = self._get_float("POTTS_WEIGHT", cfg.segmentation.potts_weight)
        cfg.segmentation.interactive_potts_decay = self._get_float(
            "INTERACTIVE_POTTS_DECAY", cfg.segmentation.interactive_potts_decay
        )
        cfg.segmentation.interactive_potts_weight = self._get_float(
            "INTERACTIVE_POTTS_WEIGHT", cfg.segmentation.interactive_potts_weight
        )
        cfg.segmentation.probability_floor = self._get_float("PROBABILITY_FLOOR", cfg.segmentation.probability_floor)

        cfg.logging.level = self._get_str("LOG_LEVEL", cfg.logging.level)
        cfg.logging.log_dir = self._get_str("LOG_DIR", cfg.logging.log_dir)
        cfg.logging.enable_file = self._get_bool("LOG_TO_FILE", cfg.logging.enable_file)

    def _validate_configuration(self):
        """Validate configuration values and constraints"""
        errors = []
        cfg = self.config

        if cfg.threads < 1:
            errors.append("HERDCRF_THREADS must be at least 1")

        if cfg.inference.method not in ("bruteforce", "elimination", "lbp"):
            errors.append("HERDCRF_INFERENCE must be one of: bruteforce, elimination, lbp")
        if cfg.inference.lbp_max_iterations < 1:
            errors.append("LBP max_iterations must be at least 1")
        if not 0.0 <= cfg.inference.lbp_damping < 1.0:
            errors.append("LBP damping must be in [0, 1)")
        if cfg.inference.lbp_tol < 0:
            errors.append("LBP tolerance must be nonnegative")
        if cfg.inference.bruteforce_limit < 1:
            errors.append("Brute-force limit must be positive")
        if cfg.inference.elimination_table_limit < 1:
            errors.append("Elimination table limit must be positive")

        if cfg.herding.divmbest_lambda < 0:
            errors.append("divMbest lambda must be nonnegative")
        if cfg.herding.eta_unary < 0 or cfg.herding.eta_pairwise < 0:
            errors.append("Herding update rates must be nonnegative")
        if cfg.herding.num_samples < 1:
            errors.append("Number of samples must be at least 1")

        seg = cfg.segmentation
        if seg.potts_decay <= 0 or seg.interactive_potts_decay <= 0:
            errors.append("Potts decay must be positive")
        if seg.potts_weight <= 0 or seg.interactive_potts_weight <= 0:
            errors.append("Potts weight must be positive")
        if not 0 < seg.probability_floor < 0.5:
            errors.append("Probability floor must be in (0, 0.5)")

        valid_log_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if cfg.logging.level.upper() not in valid_log_levels:
            errors.append(f"Log level must be one of: {valid_log_levels}")

        if errors:
            raise ValidationError(f"Configuration validation failed: {'; '.join(errors)}")

        logger.debug("Configuration validation successful")

    def _get_str(self, key: str, default: str) -> str:
        """Get string value from environment"""
        return os.getenv(ENV_PREFIX + key, default)

    def _get_bool(self, key: str, default: bool) -> bool:
        """Get boolean value from environment"""
        value = os.getenv(ENV_PREFIX + key, str(default)).lower()
        return value in ('true', '1', 'yes', 'on')

    def _get_int(self, key: str, default: int) -> int:
        """Get integer value from environment"""
        try:
            return int(os.getenv(ENV_PREFIX + key, str(default)))
        except ValueError:
            logger.warning("Invalid integer value for %s%s, using default: %s", ENV_PREFIX, key, default)
            return default

    def _get_float(self, key: str, default: float) -> float:
        """Get float value from environment"""
        try:
            return float(os.getenv(ENV_PREFIX + key, str(default)))
        except ValueError:
            logger.warning("Invalid float value for %s%s, using default: %s", ENV_PREFIX, key, default)
            return default

    def get_config(self) -> ApplicationConfig:
        """Get the application configuration"""
        return self.config

    def export_config(self) -> Dict[str, Any]:
        """Export configuration as dictionary"""
        return asdict(self.config)


# Global configuration instance
_config_manager: Optional[ConfigurationManager] = None


def initialize_config(config_file: Optional[str] = None) -> ConfigurationManager:
    """Initialize the global configuration manager"""
    global _config_manager
    try:
        _config_manager = ConfigurationManager(config_file)
        return _config_manager
    except ValidationError:
        logger.error("Configuration invalid. Please check HERDCRF_* environment variables and .env.example.")
        raise
