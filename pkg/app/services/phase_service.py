"""
Xây dựng và kiểm tra phase field Θ.

Builders return PhaseField objects carrying analytic DΘ and D²Θ; they enforce
−π < Θ < π and the discrete witness of DΘ = 0 on {Θ = 0}.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from app.core.stencils import diff_array, region_min
from app.models.grid import Grid, Region, ScalarField
from app.models.phase import (
    ConstantPhaseSpec,
    CubicPhaseSpec,
    PhaseField,
    PhaseSpec,
    ShapeFunction,
    SupercriticalPhaseSpec,
)
from app.schemas.report import EstimateReport

logger = logging.getLogger(__name__)

# Relative slack for the interpolation inequality (rounding only).
INTERPOLATION_RTOL = 1e-9


def tol_zero(h: float) -> float:
    """Allowed |DΘ| on the discrete zero set."""
    return 10.0 * h * h


def zero_set_nodes(theta: np.ndarray, h: float) -> np.ndarray:
    """
    Nodes with |Θ| ≤ h² that sit on the discrete level set {Θ = 0}: Θ is
    exactly zero there or changes sign towards a 4-neighbour.
    """
    on_set = theta == 0.0
    flip_x = theta[1:, :] * theta[:-1, :] < 0.0
    flip_y = theta[:, 1:] * theta[:, :-1] < 0.0
    on_set[1:, :] |= flip_x
    on_set[:-1, :] |= flip_x
    on_set[:, 1:] |= flip_y
    on_set[:, :-1] |= flip_y
    return on_set & (np.abs(theta) <= h * h)


class PhaseService:
    """Builders for the phase families plus the interpolation checks."""

    def _cubic_parts(self, grid: Grid, s: ShapeFunction, amplitude: float):
        X, Y = grid.coords()
        sv = s.value(X, Y)
        sx, sy = s.grad(X, Y)
        sxx, sxy, syy = s.hess()
        A = float(amplitude)
        theta = A * sv ** 3
        d1 = np.stack([3 * A * sv * sv * sx, 3 * A * sv * sv * sy])
        d2 = np.stack([
            6 * A * sv * sx * sx + 3 * A * sv * sv * sxx,
            6 * A * sv * sx * sy + 3 * A * sv * sv * sxy,
            6 * A * sv * sy * sy + 3 * A * sv * sv * syy,
        ])
        return theta, d1, d2

    def _finish(self, grid: Grid, theta, d1, d2, descriptor: dict) -> PhaseField:
        if np.any(np.abs(theta) >= np.pi):
            raise ValueError(
                f"phase range violation: max |theta| = {float(np.max(np.abs(theta))):.6g} >= pi "
                f"({descriptor})"
            )
        phase = PhaseField(
            theta=ScalarField(grid=grid, values=theta), dtheta=d1, d2theta=d2, descriptor=descriptor
        )
        witness = self.zero_set_witness(phase)
        if not witness.passed:
            raise ValueError(
                f"phase violates DΘ = 0 on {{Θ = 0}}: |DΘ| = {witness.lhs:.3e} > {witness.rhs:.3e} "
                f"at {witness.location}"
            )
        return phase

    def build_phase_cubic(self, grid: Grid, s: ShapeFunction, amplitude: float) -> PhaseField:
        """Θ = amplitude·s³, so DΘ = 3·amplitude·s²·Ds vanishes exactly on {Θ = 0}."""
        theta, d1, d2 = self._cubic_parts(grid, s, amplitude)
        descriptor = {"kind": "cubic", "amplitude": float(amplitude), "s": s.model_dump()}
        return self._finish(grid, theta, d1, d2, descriptor)

    def build_phase_signed(self, grid: Grid, spec: PhaseSpec) -> PhaseField:
        """Dispatch on the phase family descriptor (constant / supercritical / cubic)."""
        if isinstance(spec, ConstantPhaseSpec):
            theta = np.full(grid.shape, float(spec.value))
            zeros1 = np.zeros((2,) + grid.shape)
            zeros2 = np.zeros((3,) + grid.shape)
            return self._finish(grid, theta, zeros1, zeros2, spec.model_dump())

        if isinstance(spec, SupercriticalPhaseSpec):
            floor = 0.5 * np.pi + spec.delta
            if abs(spec.c) < floor:
                raise ValueError(f"supercritical base |c| = {abs(spec.c):.6g} below pi/2 + delta = {floor:.6g}")
            bump, d1, d2 = self._cubic_parts(grid, spec.s, spec.amplitude)
            theta = spec.c + bump
            if np.any(np.sign(theta) != np.sign(spec.c)) or np.any(np.abs(theta) < floor):
                raise ValueError(
                    f"supercritical phase dips below pi/2 + delta: min |theta| = "
                    f"{float(np.min(np.abs(theta))):.6g} < {floor:.6g}"
                )
            return self._finish(grid, theta, d1, d2, spec.model_dump())

        if isinstance(spec, CubicPhaseSpec):
            return self.build_phase_cubic(grid, spec.s, spec.amplitude)

        raise ValueError(f"unknown phase descriptor: {spec!r}")

    # ------------------------------------------------------------------
    def zero_set_witness(self, phase: PhaseField) -> EstimateReport:
        """Worst |DΘ| on the discrete zero set against tol_zero(h) = 10h²."""
        h = phase.grid.h
        near = zero_set_nodes(phase.values, h)
        allowed = tol_zero(h)
        if not near.any():
            return EstimateReport(name="zero_set_witness", lhs=0.0, rhs=allowed, defect=allowed,
                                  details={"nodes": 0})
        grad = np.where(near, phase.grad_norm(), -np.inf)
        flat = int(np.argmax(grad))
        i, j = np.unravel_index(flat, grad.shape)
        worst = float(grad[i, j])
        return EstimateReport(
            name="zero_set_witness",
            lhs=worst,
            rhs=allowed,
            defect=allowed - worst,
            location=phase.grid.node_xy((int(i), int(j))),
            details={"nodes": int(near.sum())},
        )

    def check_interpolation(
        self,
        f: ScalarField,
        region: Region,
        grad: Optional[np.ndarray] = None,
        d2_norm: Optional[float] = None,
        name: str = "interpolation",
    ) -> EstimateReport:
        """
        Worst defect of |Df|² ≤ 2·f·‖D²f‖∞ over region nodes.

        Missing derivatives are differenced on the grid; ``d2_norm`` then is
        the max spectral norm of the discrete Hessian over the grid.
        """
        values = f.values
        if np.any(values[region.mask] < 0):
            raise ValueError("check_interpolation needs f >= 0 on the region")
        h = f.grid.h
        if grad is None:
            grad = np.stack([diff_array(values, h, (1, 0)), diff_array(values, h, (0, 1))])
        if d2_norm is None:
            fxx = diff_array(values, h, (2, 0))
            fxy = diff_array(values, h, (1, 1))
            fyy = diff_array(values, h, (0, 2))
            d2_norm = float(np.max(np.abs(0.5 * (fxx + fyy)) + np.hypot(0.5 * (fxx - fyy), fxy)))
        lhs = grad[0] ** 2 + grad[1] ** 2
        rhs = 2.0 * values * d2_norm
        worst, loc = region_min(rhs - lhs, region)
        tol = INTERPOLATION_RTOL * max(1.0, float(np.max(rhs[region.mask])))
        return EstimateReport(
            name=name,
            lhs=float(lhs[loc]),
            rhs=float(rhs[loc]),
            defect=worst,
            location=f.grid.node_xy(loc),
            tolerance=tol,
            details={"d2_norm": d2_norm, "violations": int(np.sum((rhs - lhs)[region.mask] < -tol))},
        )

    def check_phase_interpolation(self, phase: PhaseField, region: Region, sign: int = 1) -> EstimateReport:
        """Interior interpolation check on f = max(0, ±Θ) with the analytic derivatives of Θ."""
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        signed = sign * phase.values
        f = ScalarField(grid=phase.grid, values=np.maximum(signed, 0.0))
        grad = np.where(signed >= 0, sign * phase.dtheta, 0.0)
        return self.check_interpolation(
            f, region, grad=grad, d2_norm=phase.norm_d2,
            name="interpolation_pos" if sign == 1 else "interpolation_neg",
        )

    def check_interpolation_weighted(
        self, phase: PhaseField, center: Sequence[float], R: float
    ) -> EstimateReport:
        """
        Boundary-weighted variant on B_R(center):

            |DΘ(x)|² ≤ Θ(x)²/(1 − |ξ|²) + 2‖D²Θ‖·|Θ(x)|,   ξ = (x − center)/R.
        """
        if R <= 0:
            raise ValueError(f"R must be positive (got {R})")
        grid = phase.grid
        X, Y = grid.coords()
        xi2 = ((X - center[0]) ** 2 + (Y - center[1]) ** 2) / (R * R)
        inside = xi2 <= (1.0 - grid.h / R) ** 2
        if not inside.any():
            raise ValueError("weighted interpolation ball contains no nodes")
        region = Region(grid=grid, mask=inside,
                        descriptor={"kind": "disk", "center": list(center), "radius": R})
        _, d2_norm = phase.norms_on(region)
        theta = phase.values
        lhs = phase.grad_norm() ** 2
        weight = np.where(inside, 1.0 / np.maximum(1.0 - xi2, grid.h / R), 0.0)
        rhs = theta * theta * weight + 2.0 * d2_norm * np.abs(theta)
        worst, loc = region_min(rhs - lhs, region)
        tol = INTERPOLATION_RTOL * max(1.0, float(np.max(rhs[inside])))
        return EstimateReport(
            name="interpolation_weighted",
            lhs=float(lhs[loc]),
            rhs=float(rhs[loc]),
            defect=worst,
            location=grid.node_xy(loc),
            tolerance=tol,
            details={"R": R, "d2_norm": d2_norm},
        )


phase_service = PhaseService()
