from __future__ import annotations

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Output
    FEDPROJ_OUT_DIR: str = "runs"

    # Execution
    FEDPROJ_WORKERS: int = 1

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "console"  # "console" or "json"

    model_config = {"env_file": ".env", "env_file_encoding": "utf-8", "extra": "ignore"}


settings = Settings()
