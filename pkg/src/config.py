"""Application settings for the air-data MHE harness."""

from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="MHE_FDI_", extra="ignore")

    # Output
    output_dir: Path = Field(default=Path("outputs"))
    record_solver_time: bool = Field(default=True)

    # Runner
    presets_dir: Path = Field(default=Path("presets"))
    suite_jobs: int = Field(default=1, ge=1)
    log_level: str = Field(default="INFO")


@lru_cache()
def get_settings() -> Settings:
    return Settings()
