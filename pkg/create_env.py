#!/usr/bin/env python3
"""
Script to create .env file from template
"""
import os

env_content = """# Application Configuration
LMC_APP_NAME=Lagrangian Phase Lab
LMC_APP_VERSION=1.0.0
LMC_DEBUG=False

# Run defaults
LMC_DEFAULT_SEED=20240917
LMC_OUTPUT_DIR=out
# LMC_MAX_WORKERS=4

# Solver
LMC_NEWTON_TOL=1e-10
LMC_MAX_NEWTON=40
LMC_KRYLOV_RTOL=1e-10

# Checkers
LMC_JACOBI_SLOPE=40
LMC_QUADRATURE_MARGIN=0.01
LMC_MAX_SOLVED_RESIDUAL=1e-8
LMC_GRADIENT_RATIO_BOUND=10
LMC_IDENTITY_SAMPLES=100000

# Logging Configuration
LMC_LOG_LEVEL=INFO
"""

if __name__ == "__main__":
    if os.path.exists(".env"):
        print(".env file already exists. Skipping creation.")
    else:
        with open(".env", "w") as f:
            f.write(env_content)
        print(".env file created successfully!")
        print("Adjust solver tolerances and LMC_MAX_WORKERS in .env if needed.")
