"""
Grid, ScalarField và Region: dữ liệu nền cho mọi phép tính trên lưới.

Values are stored with "ij" indexing: ``values[i, j]`` lives at
``(origin[0] + i*h, origin[1] + j*h)``.
"""
from functools import cached_property
from typing import Any, Dict, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator


class Grid(BaseModel):
    """Uniform square grid; build it through ``make_grid`` so the checks run."""

    origin: Tuple[float, float]
    extent: Tuple[float, float]
    n: int = Field(..., description="Points per axis (odd, >= 9)")

    class Config:
        frozen = True

    @property
    def h(self) -> float:
        return self.extent[0] / (self.n - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n, self.n)

    @property
    def center(self) -> Tuple[float, float]:
        return (
            self.origin[0] + 0.5 * self.extent[0],
            self.origin[1] + 0.5 * self.extent[1],
        )

    @property
    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        idx = np.arange(self.n, dtype=float)
        return self.origin[0] + idx * self.h, self.origin[1] + idx * self.h

    def coords(self) -> Tuple[np.ndarray, np.ndarray]:
        """Node coordinates (X, Y), each shaped (n, n)."""
        x, y = self.axes
        return np.meshgrid(x, y, indexing="ij")

    def node_xy(self, index: Tuple[int, int]) -> Tuple[float, float]:
        i, j = index
        return (self.origin[0] + i * self.h, self.origin[1] + j * self.h)

    def center_index(self) -> Tuple[int, int]:
        mid = (self.n - 1) // 2
        return (mid, mid)

    def quadrature_weights(self) -> np.ndarray:
        """h² per node, halved along each outer edge of the rectangle."""
        w = np.ones(self.n)
        w[0] = w[-1] = 0.5
        return self.h * self.h * np.outer(w, w)


class ScalarField(BaseModel):
    grid: Grid
    values: Any

    class Config:
        arbitrary_types_allowed = True

    @field_validator("values")
    @classmethod
    def _check_values(cls, v):
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("ScalarField values must be finite at every node")
        return arr

    def model_post_init(self, __context: Any) -> None:
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def from_function(cls, grid: Grid, func) -> "ScalarField":
        X, Y = grid.coords()
        return cls(grid=grid, values=np.broadcast_to(func(X, Y), grid.shape).copy())

    def __neg__(self) -> "ScalarField":
        return ScalarField(grid=self.grid, values=-self.values)


class Region(BaseModel):
    """Tập node (mask boolean) kèm descriptor mô tả vùng."""

    grid: Grid
    mask: Any
    descriptor: Dict[str, Any] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True

    @field_validator("mask")
    @classmethod
    def _as_bool(cls, v):
        return np.asarray(v, dtype=bool)

    def model_post_init(self, __context: Any) -> None:
        if self.mask.shape != self.grid.shape:
            raise ValueError(
                f"mask shape {self.mask.shape} does not match grid {self.grid.shape}"
            )

    @cached_property
    def count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return self.count == 0

    def intersect(self, other: "Region") -> "Region":
        if other.grid != self.grid:
            raise ValueError("Cannot intersect regions on different grids")
        return Region(
            grid=self.grid,
            mask=self.mask & other.mask,
            descriptor={"kind": "intersection", "parts": [self.descriptor, other.descriptor]},
        )

    def indices(self) -> np.ndarray:
        """Row-major (i, j) pairs of member nodes."""
        return np.argwhere(self.mask)
