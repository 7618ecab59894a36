"""
Phase field Θ: node values kèm đạo hàm giải tích (analytic derivatives).

Θ is given data, so its first and second derivatives are carried as exact
arrays; estimate checks never difference Θ numerically.
"""
from functools import cached_property
from typing import Annotated, Any, Dict, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from app.models.grid import Grid, Region, ScalarField


class ShapeFunction(BaseModel):
    """s = c0 + cx x + cy y + ½(sxx x² + 2 sxy xy + syy y²)."""

    c0: float = 0.0
    cx: float = 1.0
    cy: float = 0.0
    sxx: float = 0.0
    sxy: float = 0.0
    syy: float = 0.0

    class Config:
        frozen = True

    def value(self, x, y):
        return (
            self.c0 + self.cx * x + self.cy * y
            + 0.5 * (self.sxx * x * x + 2 * self.sxy * x * y + self.syy * y * y)
        )

    def grad(self, x, y):
        return (self.cx + self.sxx * x + self.sxy * y, self.cy + self.sxy * x + self.syy * y)

    def hess(self):
        return (self.sxx, self.sxy, self.syy)


class ConstantPhaseSpec(BaseModel):
    kind: Literal["constant"] = "constant"
    value: float


class SupercriticalPhaseSpec(BaseModel):
    """Θ = c + amplitude·s³ with |Θ| ≥ π/2 + delta and constant sign."""

    kind: Literal["supercritical"] = "supercritical"
    c: float
    delta: float = Field(0.1, gt=0)
    amplitude: float = 0.0
    s: ShapeFunction = Field(default_factory=ShapeFunction)


class CubicPhaseSpec(BaseModel):
    """Θ = amplitude·s³."""

    kind: Literal["cubic"] = "cubic"
    amplitude: float
    s: ShapeFunction = Field(default_factory=ShapeFunction)


PhaseSpec = Annotated[
    Union[ConstantPhaseSpec, SupercriticalPhaseSpec, CubicPhaseSpec],
    Field(discriminator="kind"),
]


class PhaseField(BaseModel):
    """
    Admissible phase on a grid.

    Attributes
    ----------
    theta : node values (radians)
    dtheta : array (2, n, n) with (Θ_x, Θ_y)
    d2theta : array (3, n, n) with (Θ_xx, Θ_xy, Θ_yy)
    descriptor : how the field was built (preset parameters)
    """

    theta: ScalarField
    dtheta: Any
    d2theta: Any
    descriptor: Dict[str, Any] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True

    def model_post_init(self, __context: Any) -> None:
        n = self.theta.grid.n
        self.dtheta = np.asarray(self.dtheta, dtype=float)
        self.d2theta = np.asarray(self.d2theta, dtype=float)
        if self.dtheta.shape != (2, n, n) or self.d2theta.shape != (3, n, n):
            raise ValueError(
                f"derivative arrays must be (2,{n},{n}) and (3,{n},{n}); "
                f"got {self.dtheta.shape} and {self.d2theta.shape}"
            )
        if np.any(np.abs(self.theta.values) >= np.pi):
            worst = float(np.max(np.abs(self.theta.values)))
            raise ValueError(f"phase leaves (-pi, pi): max |theta| = {worst:.6g}")

    @property
    def grid(self) -> Grid:
        return self.theta.grid

    @property
    def values(self) -> np.ndarray:
        return self.theta.values

    def grad_norm(self) -> np.ndarray:
        return np.hypot(self.dtheta[0], self.dtheta[1])

    def hess_spectral_norm(self) -> np.ndarray:
        t11, t12, t22 = self.d2theta
        mean = 0.5 * (t11 + t22)
        rad = np.hypot(0.5 * (t11 - t22), t12)
        return np.abs(mean) + rad

    @cached_property
    def norm_d1(self) -> float:
        return float(self.grad_norm().max())

    @cached_property
    def norm_d2(self) -> float:
        return float(self.hess_spectral_norm().max())

    def norms_on(self, region: Optional[Region] = None) -> Tuple[float, float]:
        """(‖DΘ‖∞, ‖D²Θ‖∞) over region nodes (whole grid when region is None)."""
        if region is None:
            return self.norm_d1, self.norm_d2
        return (
            float(self.grad_norm()[region.mask].max()),
            float(self.hess_spectral_norm()[region.mask].max()),
        )

    def negated(self) -> "PhaseField":
        return PhaseField(
            theta=-self.theta,
            dtheta=-self.dtheta,
            d2theta=-self.d2theta,
            descriptor={**self.descriptor, "negated": not self.descriptor.get("negated", False)},
        )
