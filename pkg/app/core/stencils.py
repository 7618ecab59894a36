"""
Finite-difference stencils, rasterized regions and quadrature on uniform grids.

Mọi hàm ở đây là hàm thuần (pure), không giữ state.
"""
from __future__ import annotations

import logging
from typing import Sequence, Tuple

import numpy as np
from scipy import ndimage

from app.models.grid import Grid, Region, ScalarField

logger = logging.getLogger(__name__)

# Node margin used by every estimate check so that all stencils are central.
CHECK_MARGIN = 3

# Membership slack for ball rasterization, in units of h.
_BALL_SLACK = 1e-9


def make_grid(origin: Sequence[float], extent: Sequence[float], n: int) -> Grid:
    """
    Build a uniform square grid.

    Parameters
    ----------
    origin : lower-left corner (x0, y0)
    extent : side lengths (Lx, Ly); must be equal and positive
    n : points per axis, odd and at least 9

    Returns
    -------
    Grid
    """
    errors = []
    if int(n) != n or n < 9:
        errors.append(f"n must be an integer >= 9 (got {n})")
    elif n % 2 == 0:
        errors.append(f"n must be odd so the center is a node (got {n})")
    if len(extent) != 2 or len(origin) != 2:
        errors.append("origin and extent must be 2-vectors")
    elif extent[0] <= 0 or extent[1] <= 0:
        errors.append(f"extent components must be positive (got {tuple(extent)})")
    elif extent[0] != extent[1]:
        errors.append(f"extent must be square (got {tuple(extent)})")
    if errors:
        raise ValueError("Invalid grid: " + "; ".join(errors))
    return Grid(
        origin=(float(origin[0]), float(origin[1])),
        extent=(float(extent[0]), float(extent[1])),
        n=int(n),
    )


def _first(f: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * h)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return out


def _second(f: np.ndarray, h: float) -> np.ndarray:
    h2 = h * h
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h2
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h2
    return out


def _third(f: np.ndarray, h: float) -> np.ndarray:
    h3 = h * h * h
    out = np.empty_like(f)
    out[2:-2] = (f[4:] - 2.0 * f[3:-1] + 2.0 * f[1:-3] - f[:-4]) / (2.0 * h3)
    for k in (0, 1):
        out[k] = (
            -2.5 * f[k] + 9.0 * f[k + 1] - 12.0 * f[k + 2] + 7.0 * f[k + 3] - 1.5 * f[k + 4]
        ) / h3
    for k in (-1, -2):
        out[k] = (
            2.5 * f[k] - 9.0 * f[k - 1] + 12.0 * f[k - 2] - 7.0 * f[k - 3] + 1.5 * f[k - 4]
        ) / h3
    return out


_STENCILS = {1: _first, 2: _second, 3: _third}


def diff_array(values: np.ndarray, h: float, order: Tuple[int, int]) -> np.ndarray:
    """Array-level ``diff``; composes 1-D stencils along axis 0 then axis 1."""
    a, b = int(order[0]), int(order[1])
    total = a + b
    if a < 0 or b < 0 or total < 1 or total > 3:
        raise ValueError(f"derivative order must satisfy 1 <= |order| <= 3 (got {order})")
    out = np.asarray(values, dtype=float)
    if a:
        out = _STENCILS[a](out, h)
    if b:
        out = np.moveaxis(_STENCILS[b](np.moveaxis(out, 1, 0), h), 0, 1)
    return out


def diff(field: ScalarField, order: Tuple[int, int]) -> ScalarField:
    """
    Partial derivative of a grid field.

    Central differences in the interior, second-order one-sided formulas
    near the boundary; mixed orders compose the 1-D stencils.
    """
    return ScalarField(grid=field.grid, values=diff_array(field.values, field.grid.h, order))


def ball_region(grid: Grid, center: Sequence[float], radius: float) -> Region:
    """All nodes with |x - center| <= radius."""
    if radius < 0:
        raise ValueError(f"radius must be nonnegative (got {radius})")
    X, Y = grid.coords()
    dist = np.hypot(X - center[0], Y - center[1])
    mask = dist <= radius + _BALL_SLACK * grid.h
    if not mask.any():
        raise ValueError(
            f"ball centered at {tuple(center)} with radius {radius} misses every grid node"
        )
    return Region(
        grid=grid,
        mask=mask,
        descriptor={"kind": "disk", "center": [float(center[0]), float(center[1])], "radius": float(radius)},
    )


def annulus_region(grid: Grid, center: Sequence[float], inner: float, outer: float) -> Region:
    if not 0 <= inner < outer:
        raise ValueError(f"annulus needs 0 <= inner < outer (got {inner}, {outer})")
    X, Y = grid.coords()
    dist = np.hypot(X - center[0], Y - center[1])
    slack = _BALL_SLACK * grid.h
    mask = (dist >= inner - slack) & (dist <= outer + slack)
    if not mask.any():
        raise ValueError("annulus misses every grid node")
    return Region(
        grid=grid,
        mask=mask,
        descriptor={
            "kind": "annulus",
            "center": [float(center[0]), float(center[1])],
            "inner": float(inner),
            "outer": float(outer),
        },
    )


def full_region(grid: Grid) -> Region:
    return Region(grid=grid, mask=np.ones(grid.shape, dtype=bool), descriptor={"kind": "rectangle"})


def interior_region(grid: Grid, margin: int = CHECK_MARGIN) -> Region:
    """Nodes at distance >= margin*h from the boundary."""
    mask = np.zeros(grid.shape, dtype=bool)
    mask[margin:grid.n - margin, margin:grid.n - margin] = True
    return Region(grid=grid, mask=mask, descriptor={"kind": "interior", "margin": margin})


def outer_layer(region: Region) -> np.ndarray:
    """Member nodes with at least one 4-neighbour outside the region."""
    eroded = ndimage.binary_erosion(region.mask, border_value=0)
    return region.mask & ~eroded


def ball_fits(grid: Grid, center: Sequence[float], radius: float, margin: int = CHECK_MARGIN) -> bool:
    pad = margin * grid.h
    x0, y0 = grid.origin
    x1, y1 = x0 + grid.extent[0], y0 + grid.extent[1]
    return (
        center[0] - radius >= x0 + pad - 1e-12
        and center[0] + radius <= x1 - pad + 1e-12
        and center[1] - radius >= y0 + pad - 1e-12
        and center[1] + radius <= y1 - pad + 1e-12
    )


def region_area(region: Region) -> float:
    """Discrete area with the same weights ``integrate`` uses."""
    if region.is_empty():
        raise ValueError("region is empty")
    return float(region.grid.quadrature_weights()[region.mask].sum())


def integrate(field: ScalarField, region: Region) -> float:
    """Node-sum quadrature h²·Σ values over the region (edge nodes of the rectangle weighted ½)."""
    if region.is_empty():
        raise ValueError("region is empty")
    if region.grid != field.grid:
        raise ValueError("field and region live on different grids")
    w = field.grid.quadrature_weights()
    return float(np.sum(w[region.mask] * field.values[region.mask]))


def region_max(values: np.ndarray, region: Region) -> Tuple[float, Tuple[int, int]]:
    """Max over region nodes and its first row-major location."""
    masked = np.where(region.mask, values, -np.inf)
    flat = int(np.argmax(masked))
    i, j = np.unravel_index(flat, values.shape)
    return float(masked[i, j]), (int(i), int(j))


def region_min(values: np.ndarray, region: Region) -> Tuple[float, Tuple[int, int]]:
    masked = np.where(region.mask, values, np.inf)
    flat = int(np.argmin(masked))
    i, j = np.unravel_index(flat, values.shape)
    return float(masked[i, j]), (int(i), int(j))
