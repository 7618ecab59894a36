import numpy as np
import pytest

from app.core.stencils import make_grid
from app.models.analytic import QuadraticPotential, QuadraticSinePotential
from app.models.phase import ConstantPhaseSpec
from app.services.phase_service import phase_service
from app.services.solver_service import solver_service


@pytest.fixture
def grid33():
    return make_grid((-1.0, -1.0), (2.0, 2.0), 33)


@pytest.fixture
def grid65():
    return make_grid((-1.0, -1.0), (2.0, 2.0), 65)


@pytest.fixture
def saddle(grid33):
    """u = (x² − y²)/4 with Θ ≡ 0: an exact solved instance with constant Hessian."""
    u = solver_service.potential_from_analytic(QuadraticPotential(a11=0.5, a22=-0.5), grid33)
    phase = phase_service.build_phase_signed(grid33, ConstantPhaseSpec(value=0.0))
    return u, phase


@pytest.fixture
def manufactured33(grid33):
    """Analytic u* = (x²+y²)/2 + 0.1 sin x sin y on its own manufactured phase."""
    u_star = QuadraticSinePotential()
    phase, _ = solver_service.manufactured_problem(u_star, grid33)
    return solver_service.potential_from_analytic(u_star, grid33), phase


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
