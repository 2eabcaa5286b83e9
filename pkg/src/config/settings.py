"""
Application configuration management.
"""

from functools import lru_cache

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level defaults, overridable through ``MIXEDADC_*`` variables."""

    model_config = SettingsConfigDict(
        env_prefix="MIXEDADC_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application settings
    app_name: str = Field(default="mixed-adc-detectors")
    app_version: str = Field(default="0.1.0")
    environment: str = Field(default="development")

    # Logging settings
    log_level: str = Field(default="INFO")
    log_format: str = Field(default="console")

    # Execution settings
    threads: int = Field(default=1, ge=1, description="Worker threads for trials")
    output_dir: str = Field(default="results")
    default_trials: int = Field(default=1000, ge=1)

    # Numerical defaults
    gauss_hermite_nodes: int = Field(default=40, ge=20)
    gamp_max_iterations: int = Field(default=20, ge=1)
    gamp_variance_floor: float = Field(default=1e-12, gt=0.0)
    gamp_tolerance: float = Field(default=0.0, ge=0.0)
    se_max_iterations: int = Field(default=500, ge=1)
    se_tolerance: float = Field(default=1e-10, gt=0.0)

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()

    @field_validator("log_format")
    @classmethod
    def _known_format(cls, value: str) -> str:
        value = value.lower()
        if value not in ("console", "json"):
            raise ValueError("log_format must be 'console' or 'json'")
        return value

    @property
    def is_production(self) -> bool:
        """Check if running in production environment."""
        return self.environment.lower() == "production"

    @property
    def is_testing(self) -> bool:
        """Check if running in testing environment."""
        return self.environment.lower() == "testing"


@lru_cache()
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()
