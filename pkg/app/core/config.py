from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    # Application
    app_name: str = "Lagrangian Phase Lab"
    app_version: str = "1.0.0"
    debug: bool = False

    # Run defaults (RunConfig có thể override)
    default_seed: int = 20240917
    output_dir: str = "out"
    max_workers: Optional[int] = None

    # Solver
    newton_tol: float = 1e-10
    max_newton: int = 40
    krylov_rtol: float = 1e-10

    # Checkers
    jacobi_slope: float = 40.0
    quadrature_margin: float = 0.01
    max_solved_residual: float = 1e-8
    gradient_ratio_bound: float = 10.0
    identity_samples: int = 100_000

    # Logging
    log_level: str = "INFO"

    class Config:
        env_file = ".env"
        env_prefix = "LMC_"
        case_sensitive = False


settings = Settings()
