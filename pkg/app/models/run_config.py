"""
Cấu hình một lượt chạy (RunConfig) đọc từ file TOML.

One ``[[instances]]`` table per instance; analytic descriptors are named
presets validated through the pydantic discriminated unions of the phase and
potential models.
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, model_validator

from app.core.config import settings
from app.core.stencils import CHECK_MARGIN, ball_fits, make_grid
from app.models.analytic import PotentialSpec
from app.models.phase import PhaseSpec


class ConfigError(ValueError):
    """Config không đọc được hoặc không hợp lệ (exit status 1)."""


class CheckToggles(BaseModel):
    zero_set: bool = True
    interpolation: bool = True
    jacobi: bool = True
    reflection: bool = True
    doubling: bool = True
    test_function: bool = True
    gradient: bool = True
    volume: bool = True
    volume_identity: bool = True
    tan_form: bool = True
    sigma2: bool = True
    cutoffs: bool = True
    ledger: bool = True
    identities: bool = True

    def only(self, name: str) -> "CheckToggles":
        names = list(type(self).model_fields)
        if name not in names:
            raise ConfigError(f"unknown check {name!r}; choose one of {', '.join(names)}")
        return CheckToggles(**{k: k == name for k in names})


class Tolerances(BaseModel):
    newton_tol: float = Field(default_factory=lambda: settings.newton_tol, ge=0)
    max_newton: int = Field(default_factory=lambda: settings.max_newton, gt=0)
    krylov_rtol: float = Field(default_factory=lambda: settings.krylov_rtol, gt=0)
    jacobi_slope: float = Field(default_factory=lambda: settings.jacobi_slope, gt=0)
    quadrature_margin: float = Field(default_factory=lambda: settings.quadrature_margin, ge=0)
    max_solved_residual: float = Field(default_factory=lambda: settings.max_solved_residual, gt=0)
    gradient_ratio_bound: float = Field(default_factory=lambda: settings.gradient_ratio_bound, gt=0)


class InstanceConfig(BaseModel):
    """
    One corpus instance.

    ``dirichlet``: solve F(D²u) = Θ with u = boundary preset on ∂grid.
    ``manufactured``: Θ = F(D²u*) from the boundary preset u*, then solve.
    ``exact`` marks the boundary preset as an exact solution (error rows).
    """

    id: str
    mode: Literal["dirichlet", "manufactured"] = "dirichlet"
    phase: Optional[PhaseSpec] = None
    boundary: PotentialSpec
    origin: Tuple[float, float] = (-1.0, -1.0)
    extent: Tuple[float, float] = (2.0, 2.0)
    center: Optional[Tuple[float, float]] = None
    R: float = Field(0.4, gt=0, description="Radius of the gradient/volume balls (B_R, B_2R)")
    r: float = Field(0.6, gt=0, description="Radius of the doubling/test-function ball")
    gamma: float = Field(0.5, gt=0, lt=1)
    exact: bool = False
    convergence: bool = False

    @model_validator(mode="after")
    def _phase_matches_mode(self):
        if self.mode == "dirichlet" and self.phase is None:
            raise ValueError(f"instance {self.id!r}: dirichlet mode needs a phase descriptor")
        if self.mode == "manufactured" and self.phase is not None:
            raise ValueError(f"instance {self.id!r}: manufactured mode derives the phase; drop 'phase'")
        if self.convergence and not (self.exact or self.mode == "manufactured"):
            raise ValueError(f"instance {self.id!r}: convergence needs an exact solution")
        return self

    def ball_center(self) -> Tuple[float, float]:
        if self.center is not None:
            return self.center
        return (self.origin[0] + 0.5 * self.extent[0], self.origin[1] + 0.5 * self.extent[1])


class RunConfig(BaseModel):
    name: str = "run"
    seed: int = Field(default_factory=lambda: settings.default_seed)
    output_dir: str = Field(default_factory=lambda: settings.output_dir)
    grid_sizes: List[int] = Field(default_factory=lambda: [65])
    identity_samples: int = Field(default_factory=lambda: settings.identity_samples, gt=0)
    checks: CheckToggles = Field(default_factory=CheckToggles)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    instances: List[InstanceConfig] = Field(default_factory=list)

    @model_validator(mode="after")
    def _balls_fit(self):
        problems = []
        if any(n < 9 for n in self.grid_sizes):
            problems.append(f"grid sizes must be >= 9 (got {self.grid_sizes})")
        if sorted(set(self.grid_sizes)) != list(self.grid_sizes):
            problems.append(f"grid sizes must be strictly increasing (got {self.grid_sizes})")
        ids = [inst.id for inst in self.instances]
        if len(set(ids)) != len(ids):
            problems.append(f"instance ids must be unique (got {ids})")
        for inst in self.instances:
            c = inst.ball_center()
            for n in self.grid_sizes:
                try:
                    grid = make_grid(inst.origin, inst.extent, n)
                except ValueError as e:
                    problems.append(f"{inst.id}: {e}")
                    continue
                for label, radius in (("B_2R", 2.0 * inst.R), ("B_r", inst.r)):
                    if not ball_fits(grid, c, radius, CHECK_MARGIN):
                        problems.append(f"{inst.id}@n{n}: {label} (radius {radius}) does not fit with 3h margin")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @classmethod
    def from_toml(cls, path: str) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with p.open("rb") as f:
                data = tomllib.load(f)
            data.setdefault("name", p.stem)
            return cls.model_validate(data)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid TOML in {path}: {e}") from e
        except ValidationError as e:
            raise ConfigError(f"invalid run config {path}: {e}") from e
