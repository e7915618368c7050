"""Configuration settings for the source separation toolkit."""

import os
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings."""

    # Application Configuration
    log_level: str = os.getenv("LOG_LEVEL", "INFO")
    output_dir: str = os.getenv("OUTPUT_DIR", "runs")
    default_preset: str = os.getenv("DEFAULT_PRESET", "desk")

    # Concurrent training (candidate models and one-vs-rest models)
    max_workers: int = int(os.getenv("MAX_WORKERS", "1"))

    # Report Configuration
    float_format: str = os.getenv("FLOAT_FORMAT", "%.6f")

    class Config:
        env_file = ".env"


settings = Settings()
