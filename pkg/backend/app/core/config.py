"""Core application configuration."""

import os

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

__all__ = [
    "Settings",
    "get_settings",
]


class Settings(BaseSettings):
    """
    Application settings.

    Reads configuration from environment variables. Every numerical default
    here can be overridden per run through a JSON config file or CLI flags.
    """

    # Application metadata
    PROJECT_NAME: str = "Prescribed-Time Lasso"
    PROJECT_VERSION: str = "0.1.0"
    REPORT_SCHEMA_VERSION: str = Field(
        default="1.0", description="Schema version written into report JSON"
    )

    # Integrator defaults
    DEFAULT_RTOL: float = Field(default=1e-8, gt=0, description="Relative tolerance")
    DEFAULT_ATOL: float = Field(default=1e-8, gt=0, description="Absolute tolerance")
    DEFAULT_EPS_STOP: float = Field(
        default=1e-10, gt=0, description="Residual norm at which the flow is settled"
    )
    NONNEGATIVITY_TOL: float = Field(
        default=1e-9, gt=0, description="Allowed undershoot of z and w below zero"
    )
    SAMPLE_COUNT: int = Field(
        default=200, ge=2, description="Uniform trajectory samples on [0, T_p]"
    )

    # Oracle defaults
    ORACLE_TOL: float = Field(default=1e-10, gt=0)
    ORACLE_MAX_ITER: int = Field(default=200_000, ge=1)

    # Batch execution
    MAX_WORKERS: int = Field(
        default=0, ge=0, description="Worker processes for batches (0 = one per CPU)"
    )
    OUTPUT_DIR: str = Field(default="results", description="Default artifact folder")

    # Environment settings
    ENVIRONMENT: str = "development"

    @field_validator("ENVIRONMENT")
    def environment_must_be_valid(cls, v: str) -> str:
        if v not in ["development", "staging", "production", "test"]:
            raise ValueError(
                "Environment must be one of: development, staging, production, test"
            )
        return v

    @property
    def DEBUG(self) -> bool:
        """
        Debug mode is enabled for non-production environments.
        """
        return self.ENVIRONMENT != "production"

    @property
    def WORKER_COUNT(self) -> int:
        """Resolve MAX_WORKERS, mapping 0 to the number of CPUs."""
        if self.MAX_WORKERS > 0:
            return self.MAX_WORKERS
        return os.cpu_count() or 1

    # Logging configuration
    LOG_LEVEL: str = "INFO"
    LOG_DIR: str = "logs"

    # Configure to read from environment variables only (no .env file)
    model_config = SettingsConfigDict(case_sensitive=True, extra="ignore")


# Create a global settings object
settings = Settings()


def get_settings() -> Settings:
    """
    Returns the settings object.
    """
    return settings
