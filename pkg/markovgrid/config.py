"""
Configuration module for markovgrid.
Handles environment variables, default paths and numerical defaults.
"""
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application
    APP_NAME: str = "markovgrid - TCL ensemble and DER coordination"
    APP_VERSION: str = "0.3.0"
    DEBUG: bool = False

    # API
    API_V1_PREFIX: str = "/api/v1"

    # Paths
    DATA_DIR: str = str(Path(__file__).resolve().parent / "data")
    OUTPUT_DIR: str = Field(
        default=str(Path.cwd() / "results"),
        description="Default output directory for CLI runs",
    )

    # Solver
    SOLVER_TOL: float = 1e-8
    SOLVER_MAX_ITER: int = 100
    KKT_REGULARIZATION: float = 1e-9
    INFEASIBILITY_TOL: float = 1e-8

    # MDP
    ZERO_MASS_TOL: float = 1e-9

    # Grid
    PF_TOL: float = 1e-8
    PF_MAX_ITER: int = 50
    FD_STEP: float = 1e-4
    PV_SEGMENTS: int = 8
    LINEARIZATION_WORKERS: int = 4

    # TCL
    SDE_DT_SECONDS: float = 0.5

    # MPC
    MPC_HORIZON: int = 20
    MPC_DT_SECONDS: float = 20.0
    MPC_MASS_FLOOR: float = Field(
        default=1e-6,
        description="Columns whose reachable mass stays below this carry no switch joint",
    )

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: str = str(Path(__file__).resolve().parent / "logs" / "markovgrid.log")

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True)


# Global settings instance
settings = Settings()


def ensure_directories():
    """Create the log and default output directories if they don't exist."""
    Path(settings.LOG_FILE).expanduser().resolve().parent.mkdir(parents=True, exist_ok=True)
    Path(settings.OUTPUT_DIR).expanduser().resolve().mkdir(parents=True, exist_ok=True)
