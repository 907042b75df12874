from typing import Optional
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-level settings for the CLI and the HTTP service."""

    # Run Settings
    SEED: Optional[int] = None
    OUT_DIR: str = "out"
    ENSEMBLE: int = 20000
    BATCHES: int = 20
    WORKERS: int = 1
    EXPERIMENT: str = "full-paper"
    CONFIG_PATH: Optional[str] = None
    DURATION: Optional[float] = None
    PROGRESS: bool = True

    # Logging Settings
    LOG_LEVEL: str = "INFO"

    # API Settings
    API_HOST: str = "0.0.0.0"
    API_PORT: int = 8000

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True

        # THERMAL_HBT_SEED=7 overrides SEED
        env_prefix = "THERMAL_HBT_"
        extra = "ignore"

        json_schema_extra = {
            "examples": {
                "THERMAL_HBT_SEED": "20240101",
                "THERMAL_HBT_ENSEMBLE": "20000",
                "THERMAL_HBT_WORKERS": "8",
                "THERMAL_HBT_OUT_DIR": "out",
            }
        }


# Create settings instance
settings = Settings()
