"""
Configuration management for gaussvgd.

Run-wide defaults (seeds, step sizes, numerical tolerances, output location)
are loaded from GAUSSVGD_* environment variables with optional .env support.
Experiment definitions live in YAML files handled by cli_config.
"""

import logging
from pathlib import Path
from typing import Any, Dict

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)

VERSION = "1.0.0"


class Settings(BaseSettings):
    """
    Run-wide settings using Pydantic for validation and type conversion.

    Every field can be overridden with GAUSSVGD_<FIELD>, e.g. GAUSSVGD_DEFAULT_DT=5e-4.
    """

    model_config = SettingsConfigDict(
        env_prefix="GAUSSVGD_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging and output
    log_level: str = Field(default="INFO")
    output_dir: str = Field(default="runs")

    # Reproducibility
    default_seed: int = Field(default=20240101)

    # Integration
    default_dt: float = Field(default=1e-3)

    # Numerical tolerances
    spd_rel_tol: float = Field(default=1e-12)
    commute_rel_tol: float = Field(default=1e-10)
    divergence_threshold: float = Field(default=1e12)

    # Size caps
    w2_exact_cap: int = Field(default=512)
    gamma_max_dim: int = Field(default=20)

    # Sweeps
    max_workers: int = Field(default=1)

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level is a valid logging level."""
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f'Log level must be one of {valid_levels}')
        return v.upper()

    @field_validator('default_dt', 'divergence_threshold')
    @classmethod
    def validate_positive(cls, v):
        """Step sizes and thresholds must be positive."""
        if v <= 0:
            raise ValueError('Value must be positive')
        return v

    @field_validator('spd_rel_tol', 'commute_rel_tol')
    @classmethod
    def validate_tolerance(cls, v):
        if not (0.0 <= v < 1.0):
            raise ValueError('Tolerance must lie in [0, 1)')
        return v

    @field_validator('default_seed')
    @classmethod
    def validate_seed(cls, v):
        if not (0 <= v < 2 ** 64):
            raise ValueError('Seed must be a 64-bit unsigned integer')
        return v

    @field_validator('w2_exact_cap', 'gamma_max_dim', 'max_workers')
    @classmethod
    def validate_count(cls, v):
        if v < 1:
            raise ValueError('Value must be at least 1')
        return v

    def output_path(self, *parts: str) -> Path:
        """Path under the output directory, created on demand."""
        path = Path(self.output_dir).joinpath(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def as_dict(self) -> Dict[str, Any]:
        return self.model_dump()


# Global settings instance
settings = Settings()
