from functools import cached_property
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

from app.core.stencils import diff_array
from app.models.grid import Grid, ScalarField


class PotentialField(BaseModel):
    """
    Potential u trên lưới với cache đạo hàm (Du, D²u, D³u).

    Derivatives are finite differences of the node values and are computed
    lazily; build a new PotentialField after changing u.
    """

    u: ScalarField
    descriptor: Dict[str, Any] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray, **descriptor) -> "PotentialField":
        return cls(u=ScalarField(grid=grid, values=values), descriptor=descriptor)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def values(self) -> np.ndarray:
        return self.u.values

    def _d(self, a: int, b: int) -> np.ndarray:
        return diff_array(self.u.values, self.grid.h, (a, b))

    @cached_property
    def du(self) -> np.ndarray:
        """(u_x, u_y), shape (2, n, n)."""
        return np.stack([self._d(1, 0), self._d(0, 1)])

    @cached_property
    def d2u(self) -> np.ndarray:
        """(u_xx, u_xy, u_yy), shape (3, n, n)."""
        return np.stack([self._d(2, 0), self._d(1, 1), self._d(0, 2)])

    @cached_property
    def d3u(self) -> np.ndarray:
        """(u_xxx, u_xxy, u_xyy, u_yyy), shape (4, n, n)."""
        return np.stack([self._d(3, 0), self._d(2, 1), self._d(1, 2), self._d(0, 3)])

    def negated(self) -> "PotentialField":
        return PotentialField(u=-self.u, descriptor={**self.descriptor, "negated": True})


class SolveConfig(BaseModel):
    newton_tol: float = Field(1e-10, ge=0, description="Residual sup-norm target")
    max_newton: int = Field(40, gt=0)
    damping: float = Field(0.5, gt=0, lt=1, description="Backtracking factor")
    max_halvings: int = Field(20, gt=0)
    stall_steps: int = Field(3, gt=0, description="Slow Newton steps before the flow fallback")
    flow_dt: Optional[float] = Field(None, gt=0, description="None = stability-based default")
    flow_steps_max: int = Field(20000, gt=0)
    krylov_rtol: float = Field(1e-10, gt=0)


class SolveResult(BaseModel):
    u: PotentialField
    residual_sup: float
    iterations: int
    path: Literal["newton-only", "flow-then-newton"]
    residual_history: List[float] = Field(default_factory=list)
    flow_steps: int = 0

    class Config:
        arbitrary_types_allowed = True
