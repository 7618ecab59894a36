"""
Solver cho phương trình Lagrangian mean curvature 2D

    F(D²u) = arctan λ1 + arctan λ2 = Θ(x)

Dirichlet problems are solved by damped Newton on the interior nodal system
(discretize-then-linearize). The Jacobian row of node x is
g^{11}δ_xx + 2g^{12}δ_xy + g^{22}δ_yy with (g^{ab}) = (I + (D²u)²)^{-1},
assembled as a 9-point stencil and solved with preconditioned BiCGSTAB.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from app.core.config import settings
from app.models.analytic import AnalyticPotential
from app.models.grid import Grid, ScalarField
from app.models.phase import PhaseField
from app.models.potential import PotentialField, SolveConfig, SolveResult
from app.services.geometry_service import geometry_service

logger = logging.getLogger(__name__)

# Step for the 4th-order differencing of analytic DΘ* in manufactured problems.
_FD_STEP = 1e-3

# An accepted Newton step must cut the residual below this fraction to count as progress.
_PROGRESS_RATIO = 0.99


class SolverConvergenceError(RuntimeError):
    """Newton/flow không hội tụ trong giới hạn; mang theo lịch sử residual."""

    def __init__(self, message: str, residual_history: List[float], path: str):
        super().__init__(message)
        self.residual_history = list(residual_history)
        self.path = path


class SolverService:
    # ------------------------------------------------------------------
    # Operator and residuals
    # ------------------------------------------------------------------
    def operator_F_components(self, h11, h12, h22) -> np.ndarray:
        spec = geometry_service.spectrum_from_components(h11, h12, h22)
        return np.arctan(spec.lambda1) + np.arctan(spec.lambda2)

    def operator_F(self, H) -> np.ndarray:
        """arctan λ1 + arctan λ2 of a symmetric 2×2 (or a stack of them)."""
        spec = geometry_service.hessian_spectrum(H)
        return np.arctan(spec.lambda1) + np.arctan(spec.lambda2)

    def linearized_coeffs(self, H) -> np.ndarray:
        """(I + H²)^{-1} as (..., 2, 2); the derivative of F at H."""
        H = np.asarray(H, dtype=float)
        off = 0.5 * (H[..., 0, 1] + H[..., 1, 0])
        g11, g12, g22 = geometry_service.inverse_metric(H[..., 0, 0], off, H[..., 1, 1])
        out = np.empty(np.shape(g11) + (2, 2))
        out[..., 0, 0], out[..., 0, 1] = g11, g12
        out[..., 1, 0], out[..., 1, 1] = g12, g22
        return out

    @staticmethod
    def _interior(values: np.ndarray) -> np.ndarray:
        out = np.zeros_like(values)
        out[1:-1, 1:-1] = values[1:-1, 1:-1]
        return out

    def _check_grid(self, u: PotentialField, phase: PhaseField) -> None:
        if u.grid != phase.grid:
            raise ValueError("potential and phase must share one grid")

    def residual(self, u: PotentialField, phase: PhaseField) -> ScalarField:
        """F(D²u) − Θ at interior nodes (boundary nodes hold 0)."""
        self._check_grid(u, phase)
        F = self.operator_F_components(*u.d2u)
        return ScalarField(grid=u.grid, values=self._interior(F - phase.values))

    def tan_form_residual(self, u: PotentialField, phase: PhaseField) -> ScalarField:
        """cosΘ·σ1 + sinΘ·(σ2 − 1) at interior nodes."""
        self._check_grid(u, phase)
        uxx, uxy, uyy = u.d2u
        s1 = uxx + uyy
        s2 = uxx * uyy - uxy * uxy
        theta = phase.values
        out = np.cos(theta) * s1 + np.sin(theta) * (s2 - 1.0)
        return ScalarField(grid=u.grid, values=self._interior(out))

    def analytic_residual(self, u_star: AnalyticPotential, phase: PhaseField) -> np.ndarray:
        """F(D²u*) − Θ using the exact Hessian of an analytic potential."""
        X, Y = phase.grid.coords()
        return self.operator_F_components(*u_star.hess(X, Y)) - phase.values

    # ------------------------------------------------------------------
    # Assembly
    # ------------------------------------------------------------------
    def _stencil_matrix(self, grid: Grid, g11, g12, g22) -> sp.csr_matrix:
        """
        Rows = interior nodes, columns = all nodes (row-major numbering).

        Coefficient arrays are given on interior nodes, shape (n-2, n-2).
        """
        n, h2 = grid.n, grid.h * grid.h
        ii, jj = np.meshgrid(np.arange(1, n - 1), np.arange(1, n - 1), indexing="ij")
        rows = (ii * n + jj).ravel()
        offsets = [
            ((0, 0), -2.0 * (g11 + g22) / h2),
            ((1, 0), g11 / h2),
            ((-1, 0), g11 / h2),
            ((0, 1), g22 / h2),
            ((0, -1), g22 / h2),
            ((1, 1), g12 / (2.0 * h2)),
            ((-1, -1), g12 / (2.0 * h2)),
            ((1, -1), -g12 / (2.0 * h2)),
            ((-1, 1), -g12 / (2.0 * h2)),
        ]
        all_rows, all_cols, all_vals = [], [], []
        for (di, dj), coeff in offsets:
            all_rows.append(rows)
            all_cols.append(((ii + di) * n + (jj + dj)).ravel())
            all_vals.append(np.broadcast_to(coeff, ii.shape).ravel())
        M = sp.coo_matrix(
            (np.concatenate(all_vals), (np.concatenate(all_rows), np.concatenate(all_cols))),
            shape=(n * n, n * n),
        ).tocsr()
        return M[rows]

    @staticmethod
    def _node_sets(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
        mask = np.zeros(grid.shape, dtype=bool)
        mask[1:-1, 1:-1] = True
        flat = mask.ravel()
        return np.flatnonzero(flat), np.flatnonzero(~flat)

    def _linear_solve(self, A: sp.csr_matrix, rhs: np.ndarray, rtol: float) -> np.ndarray:
        diag = A.diagonal()
        diag = np.where(diag == 0.0, 1.0, diag)
        M = sp.diags(1.0 / diag)
        x, info = spla.bicgstab(A, rhs, rtol=rtol, atol=0.0, M=M, maxiter=int(20 * A.shape[0] ** 0.5) + 200)
        if info != 0:
            logger.warning(f"⚠ BiCGSTAB không hội tụ (info={info}); chuyển sang spsolve")
            x = spla.spsolve(A.tocsc(), rhs)
        return np.asarray(x, dtype=float)

    # ------------------------------------------------------------------
    # Dirichlet solve
    # ------------------------------------------------------------------
    def initial_guess(self, phase: PhaseField, boundary: ScalarField, cfg: SolveConfig) -> np.ndarray:
        """Poisson solve Δu = 2·tan(Θ/2) with the boundary trace."""
        grid = phase.grid
        interior, bdry = self._node_sets(grid)
        ones = np.ones((grid.n - 2, grid.n - 2))
        M = self._stencil_matrix(grid, ones, 0.0 * ones, ones)
        A, B = M[:, interior], M[:, bdry]
        values = boundary.values.copy().reshape(-1)
        f = 2.0 * np.tan(0.5 * phase.values)
        rhs = f.ravel()[interior] - B @ values.ravel()[bdry]
        values[interior] = self._linear_solve(A.tocsr(), rhs, cfg.krylov_rtol)
        return values.reshape(grid.shape)

    def _residual_values(self, grid: Grid, values: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pot = PotentialField.from_values(grid, values)
        d2 = pot.d2u
        F = self.operator_F_components(*d2)
        return self._interior(F - theta), d2

    def _default_dt(self, grid: Grid, d2: np.ndarray) -> float:
        g11, _, g22 = geometry_service.inverse_metric(*d2)
        trace = float(np.max((g11 + g22)[1:-1, 1:-1]))
        return 0.2 * grid.h * grid.h / max(1.0, trace)

    def _flow(self, grid, values, theta, r_start, cfg, history) -> Tuple[np.ndarray, int]:
        """Explicit pseudo-time flow u ← u + dt·(F(D²u) − Θ) until the residual halves."""
        target = 0.5 * r_start
        R, d2 = self._residual_values(grid, values, theta)
        dt = cfg.flow_dt if cfg.flow_dt is not None else self._default_dt(grid, d2)
        logger.warning(f"⚠ Newton chững lại tại residual {r_start:.3e}; chạy flow với dt={dt:.3e}")
        for step in range(1, cfg.flow_steps_max + 1):
            values = values + dt * R
            R, d2 = self._residual_values(grid, values, theta)
            r = float(np.max(np.abs(R)))
            if not np.isfinite(r):
                break
            if r <= target:
                history.append(r)
                logger.info(f"  - flow halved residual in {step} steps ({r:.3e})")
                return values, step
        raise SolverConvergenceError(
            f"pseudo-time flow failed to halve residual {r_start:.3e} within {cfg.flow_steps_max} steps",
            history,
            "flow-then-newton",
        )

    def solve_dirichlet(
        self,
        phase: PhaseField,
        boundary: ScalarField,
        grid: Grid,
        cfg: Optional[SolveConfig] = None,
    ) -> SolveResult:
        """
        Damped Newton for F(D²u) = Θ with u = boundary on ∂grid.

        Raises
        ------
        SolverConvergenceError
            when the iteration caps are exhausted before residual ≤ newton_tol.
        """
        cfg = cfg or SolveConfig(newton_tol=settings.newton_tol, max_newton=settings.max_newton,
                                 krylov_rtol=settings.krylov_rtol)
        if not (phase.grid == boundary.grid == grid):
            raise ValueError("phase, boundary and grid must agree")
        theta = phase.values
        interior, _ = self._node_sets(grid)
        n_int = grid.n - 2

        values = self.initial_guess(phase, boundary, cfg)
        R, d2 = self._residual_values(grid, values, theta)
        r = float(np.max(np.abs(R)))
        history = [r]
        path = "newton-only"
        iterations, stalled, flow_steps = 0, 0, 0
        logger.debug(f"Newton start n={grid.n}: residual {r:.3e}")

        while r > cfg.newton_tol:
            if iterations >= cfg.max_newton:
                raise SolverConvergenceError(
                    f"Newton did not reach {cfg.newton_tol:.1e} in {cfg.max_newton} iterations "
                    f"(residual {r:.3e})",
                    history,
                    path,
                )
            g11, g12, g22 = (g[1:-1, 1:-1] for g in geometry_service.inverse_metric(*d2))
            J = self._stencil_matrix(grid, g11, g12, g22)[:, interior].tocsr()
            delta = self._linear_solve(J, -R[1:-1, 1:-1].ravel(), cfg.krylov_rtol)
            step = np.zeros(grid.shape)
            step[1:-1, 1:-1] = delta.reshape(n_int, n_int)

            t, accepted = 1.0, False
            for _ in range(cfg.max_halvings + 1):
                trial = values + t * step
                R_trial, d2_trial = self._residual_values(grid, trial, theta)
                r_trial = float(np.max(np.abs(R_trial)))
                if np.isfinite(r_trial) and r_trial < r:
                    accepted = True
                    break
                t *= cfg.damping
            iterations += 1

            if accepted:
                stalled = stalled + 1 if r_trial > _PROGRESS_RATIO * r else 0
                values, R, d2, r = trial, R_trial, d2_trial, r_trial
                history.append(r)
                logger.debug(f"  Newton {iterations}: residual {r:.3e} (step {t:.3g})")
            else:
                stalled = cfg.stall_steps

            if stalled >= cfg.stall_steps and r > cfg.newton_tol:
                values, used = self._flow(grid, values, theta, r, cfg, history)
                flow_steps += used
                path = "flow-then-newton"
                stalled = 0
                R, d2 = self._residual_values(grid, values, theta)
                r = float(np.max(np.abs(R)))

        logger.info(f"✓ Solved n={grid.n}: residual {r:.3e} after {iterations} Newton steps ({path})")
        return SolveResult(
            u=PotentialField.from_values(grid, values, source="solve_dirichlet"),
            residual_sup=r,
            iterations=iterations,
            path=path,
            residual_history=history,
            flow_steps=flow_steps,
        )

    # ------------------------------------------------------------------
    # Analytic potentials and manufactured problems
    # ------------------------------------------------------------------
    def potential_from_analytic(self, u_star: AnalyticPotential, grid: Grid) -> PotentialField:
        X, Y = grid.coords()
        return PotentialField.from_values(grid, u_star.value(X, Y), source="analytic")

    def _dtheta_exact(self, u_star: AnalyticPotential, x, y) -> Tuple[np.ndarray, np.ndarray]:
        """DΘ* = (Σ g^{ab} u_{abx}, Σ g^{ab} u_{aby}) by the chain rule."""
        g11, g12, g22 = geometry_service.inverse_metric(*u_star.hess(x, y))
        t111, t112, t122, t222 = u_star.third(x, y)
        return (
            g11 * t111 + 2.0 * g12 * t112 + g22 * t122,
            g11 * t112 + 2.0 * g12 * t122 + g22 * t222,
        )

    def _d_dx(self, func, x, y, axis: int):
        d = _FD_STEP
        ex, ey = (d, 0.0) if axis == 0 else (0.0, d)
        fp2 = func(x + 2 * ex, y + 2 * ey)
        fp1 = func(x + ex, y + ey)
        fm1 = func(x - ex, y - ey)
        fm2 = func(x - 2 * ex, y - 2 * ey)
        return tuple((-a + 8 * b - 8 * c + e) / (12 * d) for a, b, c, e in zip(fp2, fp1, fm1, fm2))

    def manufactured_problem(self, u_star: AnalyticPotential, grid: Grid) -> Tuple[PhaseField, ScalarField]:
        """Θ* = F(D²u*) with analytic DΘ*, differenced D²Θ*, and the trace of u*."""
        X, Y = grid.coords()
        theta = self.operator_F_components(*u_star.hess(X, Y))
        if np.any(np.abs(theta) >= np.pi):
            raise ValueError("manufactured phase leaves (-pi, pi)")

        def dtheta(x, y):
            return self._dtheta_exact(u_star, x, y)

        tx, ty = dtheta(X, Y)
        txx, txy_a = self._d_dx(dtheta, X, Y, axis=0)
        tyx_a, tyy = self._d_dx(dtheta, X, Y, axis=1)
        # Θ_xy from both orders, averaged
        txy = 0.5 * (txy_a + tyx_a)
        phase = PhaseField(
            theta=ScalarField(grid=grid, values=theta),
            dtheta=np.stack([tx, ty]),
            d2theta=np.stack([txx, txy, tyy]),
            descriptor={"kind": "manufactured", "potential": u_star.model_dump()},
        )
        boundary = ScalarField(grid=grid, values=u_star.value(X, Y))
        return phase, boundary


solver_service = SolverService()
