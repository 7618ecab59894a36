"""
Kiểm tra các đánh giá (estimates) trên nghiệm đã giải.

Covers the degenerate Jacobi inequality for b = log V, the doubling test
function P with its constant ledger, the scale-invariant gradient estimate,
the averaged volume bound and the σ2 divergence identity. Every check returns
an EstimateReport; nothing here mutates its inputs.
"""
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.stencils import (
    CHECK_MARGIN,
    ball_fits,
    ball_region,
    diff_array,
    integrate,
    interior_region,
    outer_layer,
    region_area,
    region_max,
    region_min,
)
from app.models.analytic import AnalyticPotential
from app.models.grid import Region, ScalarField
from app.models.ledger import ConstantLedger, PFunctionResult, VolumeBoundConstants
from app.models.phase import PhaseField
from app.models.potential import PotentialField
from app.schemas.report import EstimateReport
from app.services.geometry_service import geometry_service
from app.services.solver_service import solver_service

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * np.pi
SUPERCRITICAL_EPS = 3.0 / 8.0
# K values below this count as "no violation" in the refinement row.
VANISHING_K = 1e-6
DOUBLING_DRIFT = 0.10
SIGMA2_SLOPE = 100.0
SCALING_RADII = (0.25, 0.5, 2.0)
SCALING_POINTS = (np.array([0.0, 0.1, -0.2, 0.15]), np.array([0.0, -0.05, 0.1, 0.2]))
SCALING_RTOL = 1e-12
DEFAULT_TILT = (0.5, -0.25)
# Rounding allowance for differences of the tilted field, per unit |u|.
TILT_ROUNDING = 1e3 * np.finfo(float).eps


class EstimatesService:
    # ------------------------------------------------------------------
    # Jacobi inequality
    # ------------------------------------------------------------------
    def jacobi_constant(self, theta, norms: Tuple[float, float]):
        """
        (ε, C) of Δ_g b ≥ ε|∇_g b|² − C at a point with phase value θ.

        |θ| < π/2: ε = sin|θ|/4, C = 5π²/8 + ((5π+4)/2)‖D²Θ‖.
        |θ| ≥ π/2: ε = 3/8, C = 2‖DΘ‖² + 2‖D²Θ‖.
        Broadcasts over arrays of θ.
        """
        theta = np.asarray(theta, dtype=float)
        if np.any(np.abs(theta) >= np.pi):
            raise ValueError(f"jacobi_constant needs |theta| < pi (got max {float(np.max(np.abs(theta))):.6g})")
        n1, n2 = float(norms[0]), float(norms[1])
        subcritical = np.abs(theta) < HALF_PI
        eps = np.where(subcritical, np.sin(np.abs(theta)) / 4.0, SUPERCRITICAL_EPS)
        C = np.where(
            subcritical,
            5.0 * np.pi ** 2 / 8.0 + 0.5 * (5.0 * np.pi + 4.0) * n2,
            2.0 * n1 * n1 + 2.0 * n2,
        )
        if eps.ndim == 0:
            return float(eps), float(C)
        return eps, C

    def jacobi_defect_field(self, u: PotentialField, phase: PhaseField) -> ScalarField:
        """Δ_g b − ε(Θ)|∇_g b|² + C(Θ) at every node; b = log V differenced on the grid."""
        b = geometry_service.b_field(u)
        lap = geometry_service.laplace_beltrami(b, u, phase).values
        grad2 = geometry_service.grad_norm_g(b, u).values
        eps, C = self.jacobi_constant(phase.values, (phase.norm_d1, phase.norm_d2))
        return ScalarField(grid=u.grid, values=lap - eps * grad2 + C)

    def _require_solved(self, u: PotentialField, phase: PhaseField, max_residual: Optional[float]) -> float:
        limit = settings.max_solved_residual if max_residual is None else max_residual
        r = float(np.max(np.abs(solver_service.residual(u, phase).values)))
        if r > limit:
            raise ValueError(f"potential is not a solved instance: residual {r:.3e} > {limit:.1e}")
        return r

    def jacobi_report(
        self,
        u: PotentialField,
        phase: PhaseField,
        region: Optional[Region] = None,
        max_residual: Optional[float] = None,
        slope: Optional[float] = None,
    ) -> EstimateReport:
        """Min Jacobi defect over the region (restricted to the 3h interior); tolerance K·h."""
        self._require_solved(u, phase, max_residual)
        grid = u.grid
        inner = interior_region(grid, CHECK_MARGIN)
        region = inner if region is None else region.intersect(inner)
        if region.is_empty():
            raise ValueError("jacobi_report region has no nodes at 3h distance from the boundary")
        K = settings.jacobi_slope if slope is None else slope
        defect = self.jacobi_defect_field(u, phase).values
        worst, loc = region_min(defect, region)
        eps, C = self.jacobi_constant(float(phase.values[loc]), (phase.norm_d1, phase.norm_d2))
        return EstimateReport(
            name="jacobi",
            lhs=worst - C,
            rhs=-C,
            defect=worst,
            location=grid.node_xy(loc),
            tolerance=K * grid.h,
            grid_n=grid.n,
            details={"K": K, "h": grid.h, "epsilon": eps, "C": C, "K_h": max(0.0, -worst) / grid.h},
        )

    def jacobi_refinement(self, reports: Sequence[EstimateReport]) -> EstimateReport:
        """K_h = max(0, −min defect)/h on successive grids: the finer K may not exceed twice the coarser."""
        ordered = sorted(reports, key=lambda r: r.details["h"], reverse=True)
        if len(ordered) < 2:
            raise ValueError("jacobi_refinement needs reports from at least two grids")
        ks = [r.details["K_h"] for r in ordered]
        margins = [
            2.0 * max(coarse, VANISHING_K) - fine
            for coarse, fine in zip(ks[:-1], ks[1:])
        ]
        k = int(np.argmin(margins))
        return EstimateReport(
            name="jacobi_refinement",
            lhs=ks[k + 1],
            rhs=2.0 * max(ks[k], VANISHING_K),
            defect=margins[k],
            instance_id=ordered[0].instance_id,
            details={"K_h": ks, "h": [r.details["h"] for r in ordered]},
        )

    # ------------------------------------------------------------------
    # Doubling: constants, test function, ratios
    # ------------------------------------------------------------------
    def choose_constants(self, gamma: float, Gamma: float) -> ConstantLedger:
        """α = ½(γ/(4672Γ))³, β = geometric mean of the admissible window."""
        problems = []
        if not 0 < gamma < 1:
            problems.append(f"gamma must lie in (0, 1) (got {gamma})")
        if not Gamma >= 1:
            problems.append(f"Gamma must be >= 1 (got {Gamma})")
        if problems:
            raise ValueError("; ".join(problems))
        alpha = 0.5 * ConstantLedger.alpha_threshold(gamma, Gamma)
        lo, hi = ConstantLedger.beta_window(alpha, gamma, Gamma)
        ledger = ConstantLedger(alpha=alpha, beta=float(np.sqrt(lo * hi)), gamma=gamma, Gamma=Gamma)
        failed = [k for k, ok in ledger.inequalities().items() if not ok]
        if failed:
            logger.error(f"✗ Ledger for gamma={gamma}, Gamma={Gamma} fails: {failed}")
            raise ValueError(f"constant ledger infeasible: {failed}")
        return ledger

    def ledger_report(self, ledger: ConstantLedger, instance_id: str = "global") -> EstimateReport:
        checks = ledger.inequalities()
        held = sum(checks.values())
        return EstimateReport(
            name="constant_ledger",
            lhs=float(held),
            rhs=float(len(checks)),
            defect=float(held - len(checks)),
            instance_id=instance_id,
            details=ledger.summary(),
        )

    def gamma_for(self, u: PotentialField, center: Sequence[float], r: float) -> float:
        """Γ = 1 + ‖u‖_{C¹} over the ball."""
        ball = ball_region(u.grid, center, r)
        du = np.hypot(*u.du)
        return 1.0 + float(np.max(np.abs(u.values[ball.mask]))) + float(np.max(du[ball.mask]))

    def test_function_P(
        self,
        u: PotentialField,
        phase: PhaseField,
        ledger: ConstantLedger,
        center: Sequence[float],
        r: float,
    ) -> PFunctionResult:
        """
        P = ν ln ρ + α(ξ·Dv − v) + β|Dv|²/2 + ln max(b̄, γ⁻¹) on B_r(center) rescaled to B1.

        v(ξ) = u(center + rξ)/r², ρ = 1 − |ξ|², b̄ = b − max_{|ξ|≤1/2} b.
        P is evaluated at nodes with ρ > h/r and is NaN elsewhere.
        """
        if not ledger.is_valid():
            raise ValueError(f"ledger fails {[k for k, ok in ledger.inequalities().items() if not ok]}")
        if r <= 0:
            raise ValueError(f"r must be positive (got {r})")
        grid = u.grid
        if not ball_fits(grid, center, r, margin=0):
            raise ValueError(f"B_r({tuple(center)}) with r={r} does not fit in the grid")
        X, Y = grid.coords()
        xi_x, xi_y = (X - center[0]) / r, (Y - center[1]) / r
        rho = 1.0 - (xi_x ** 2 + xi_y ** 2)
        domain = rho > grid.h / r
        half = (xi_x ** 2 + xi_y ** 2) <= 0.25
        if not (domain.any() and half.any()):
            raise ValueError("test-function ball has too few nodes")

        b = geometry_service.b_field(u).values
        b_bar = b - float(np.max(b[half]))
        ux, uy = u.du
        v = u.values / (r * r)
        vx, vy = ux / r, uy / r
        with np.errstate(divide="ignore", invalid="ignore"):
            P = (
                ledger.nu * np.log(np.where(domain, rho, 1.0))
                + ledger.alpha * (xi_x * vx + xi_y * vy - v)
                + 0.5 * ledger.beta * (vx * vx + vy * vy)
                + np.log(np.maximum(b_bar, 1.0 / ledger.gamma))
            )
        P = np.where(domain, P, np.nan)

        region = Region(grid=grid, mask=domain, descriptor={"kind": "test_function", "r": r})
        outer = outer_layer(region)
        best, loc = region_max(np.where(domain, P, -np.inf), region)
        inner = domain & ~outer
        return PFunctionResult(
            values=P,
            region_mask=domain,
            max_value=best,
            argmax=loc,
            inner_max=float(np.max(P[inner])) if inner.any() else -np.inf,
            outer_max=float(np.max(P[outer])) if outer.any() else -np.inf,
            on_outer_layer=bool(outer[loc]),
        )

    def test_function_report(self, u: PotentialField, result: PFunctionResult) -> EstimateReport:
        """max P must sit strictly inside: margin = max over inner nodes − max over the outer layer."""
        return EstimateReport(
            name="test_function_interior_max",
            lhs=result.inner_max,
            rhs=result.outer_max,
            defect=result.inner_max - result.outer_max,
            location=u.grid.node_xy(result.argmax),
            grid_n=u.grid.n,
            details={"max_P": result.max_value, "nodes": int(result.region_mask.sum())},
        )

    def doubling_report(
        self, u: PotentialField, phase: PhaseField, p: Sequence[float], r: float
    ) -> EstimateReport:
        """Ratio max(sup_{B_r} b, 1)/max(sup_{B_{r/2}} b, 1); recorded, not bounded."""
        grid = u.grid
        if not ball_fits(grid, p, r):
            raise ValueError(f"B_r({tuple(p)}) with r={r} does not fit the grid interior with 3h margin")
        b = geometry_service.b_field(u).values
        outer_sup, loc = region_max(b, ball_region(grid, p, r))
        basis, _ = region_max(b, ball_region(grid, p, 0.5 * r))
        ratio = max(outer_sup, 1.0) / max(basis, 1.0)
        return EstimateReport(
            name="doubling",
            lhs=outer_sup,
            rhs=max(basis, 1.0),
            defect=0.0,
            location=grid.node_xy(loc),
            grid_n=grid.n,
            details={"ratio": ratio, "r": r, "p": list(p), "asserted": False},
        )

    def doubling_constant(self, reports: Iterable[EstimateReport]) -> EstimateReport:
        """Empirical doubling constant: the max ratio over an instance family."""
        rows: List[EstimateReport] = list(reports)
        if not rows:
            raise ValueError("doubling_constant needs at least one doubling report")
        worst = max(rows, key=lambda r: r.details["ratio"])
        ratio = worst.details["ratio"]
        return EstimateReport(
            name="doubling_constant",
            lhs=ratio,
            rhs=ratio,
            defect=0.0 if np.isfinite(ratio) else -np.inf,
            details={"family_size": len(rows), "worst_instance": worst.instance_id},
        )

    def doubling_stability(self, coarse: EstimateReport, fine: EstimateReport) -> EstimateReport:
        """Relative change of the doubling ratio from h to h/2 stays within 10%."""
        rc, rf = coarse.details["ratio"], fine.details["ratio"]
        change = abs(rf - rc) / rc
        return EstimateReport(
            name="doubling_stability",
            lhs=change,
            rhs=DOUBLING_DRIFT,
            defect=DOUBLING_DRIFT - change,
            instance_id=coarse.instance_id,
            details={"ratio_h": rc, "ratio_h2": rf},
        )

    # ------------------------------------------------------------------
    # Gradient estimate
    # ------------------------------------------------------------------
    def gradient_estimate_report(
        self,
        u: PotentialField,
        phase: PhaseField,
        R: float,
        center: Optional[Sequence[float]] = None,
        ratio_bound: Optional[float] = None,
    ) -> EstimateReport:
        """
        R|Du(c)| against (osc u)(1 + osc u) on B_R(c); c defaults to the grid center node.

        The ratio must stay below ``ratio_bound`` (LMC_GRADIENT_RATIO_BOUND by default).
        """
        grid = u.grid
        idx = grid.center_index() if center is None else self._nearest(grid, center)
        c = grid.node_xy(idx)
        if not ball_fits(grid, c, R, margin=0):
            raise ValueError(f"B_R({c}) with R={R} does not fit in the grid")
        bound = settings.gradient_ratio_bound if ratio_bound is None else ratio_bound
        ball = ball_region(grid, c, R)
        lhs = R * float(np.hypot(u.du[0][idx], u.du[1][idx]))
        vals = u.values[ball.mask]
        osc = float(vals.max() - vals.min())
        basis = osc * (1.0 + osc)
        if basis > 0:
            ratio = lhs / basis
        else:
            ratio = 0.0 if lhs == 0 else float("inf")
        return EstimateReport(
            name="gradient_estimate",
            lhs=lhs,
            rhs=basis,
            defect=bound - ratio,
            location=c,
            grid_n=grid.n,
            details={"ratio": ratio, "ratio_bound": bound, "R": R, "osc": osc},
        )

    def gradient_ratio_family(
        self, reports: Iterable[EstimateReport], ratio_bound: Optional[float] = None
    ) -> EstimateReport:
        """Largest gradient-estimate ratio over an instance family against the configured bound."""
        rows: List[EstimateReport] = list(reports)
        if not rows:
            raise ValueError("gradient_ratio_family needs at least one gradient_estimate report")
        bound = settings.gradient_ratio_bound if ratio_bound is None else ratio_bound
        worst = max(rows, key=lambda r: r.details["ratio"])
        ratio = worst.details["ratio"]
        return EstimateReport(
            name="gradient_ratio_family",
            lhs=ratio,
            rhs=bound,
            defect=bound - ratio,
            details={"family_size": len(rows), "worst_instance": worst.instance_id, "worst_grid": worst.grid_n},
        )

    def gradient_scaling_report(
        self,
        potentials: Sequence[AnalyticPotential],
        radii: Sequence[float] = SCALING_RADII,
    ) -> EstimateReport:
        """
        ũ(x) = u(Rx)/R² on analytic presets: R|Dũ(0)| = |Du(0)| and ũ = u(R·)/R²
        at a few sample points, relative error within 1e-12.
        """
        if not potentials:
            raise ValueError("gradient_scaling_report needs at least one analytic potential")
        xs, ys = SCALING_POINTS
        worst, where = 0.0, {}
        for u in potentials:
            g0 = float(np.hypot(*u.grad(0.0, 0.0)))
            for R in radii:
                scaled = u.rescaled(R)
                lhs = R * float(np.hypot(*scaled.grad(0.0, 0.0)))
                grad_err = abs(lhs - g0) / max(1.0, g0)
                expected = u.value(R * xs, R * ys) / (R * R)
                value_err = float(np.max(np.abs(scaled.value(xs, ys) - expected) / np.maximum(1.0, np.abs(expected))))
                err = max(grad_err, value_err)
                if err > worst or not where:
                    worst = err
                    where = {"preset": getattr(u, "kind", type(u).__name__), "R": R, "grad_Du0": g0, "R_grad_scaled": lhs}
        return EstimateReport(
            name="gradient_scaling",
            lhs=worst,
            rhs=0.0,
            defect=-worst,
            tolerance=SCALING_RTOL,
            details={**where, "presets": len(potentials), "radii": list(radii)},
        )

    def gradient_tilt_report(
        self,
        u: PotentialField,
        phase: PhaseField,
        R: float,
        tilt: Sequence[float] = DEFAULT_TILT,
        center: Optional[Sequence[float]] = None,
        ratio_bound: Optional[float] = None,
    ) -> EstimateReport:
        """
        u + c·x solves the same equation: D²u is unchanged, Du(center) moves by c
        and the gradient-estimate ratio of the tilted field stays bounded.
        """
        grid = u.grid
        X, Y = grid.coords()
        moved = PotentialField(
            u=ScalarField(grid=grid, values=u.values + tilt[0] * X + tilt[1] * Y),
            descriptor={**u.descriptor, "tilt": [float(t) for t in tilt]},
        )
        base = self.gradient_estimate_report(u, phase, R, center, ratio_bound)
        shifted = self.gradient_estimate_report(moved, phase, R, center, ratio_bound)

        region = interior_region(grid, CHECK_MARGIN)
        hess_shift = float(np.max(np.abs(moved.d2u - u.d2u)[:, region.mask]))
        i, j = grid.center_index() if center is None else self._nearest(grid, center)
        grad_shift = float(np.max(np.abs(moved.du[:, i, j] - u.du[:, i, j] - np.asarray(tilt, dtype=float))))
        scale = TILT_ROUNDING * max(1.0, float(np.max(np.abs(moved.values))))
        invariant = hess_shift <= scale / grid.h ** 2 and grad_shift <= scale / grid.h
        if not invariant:
            logger.error(f"✗ Tilt by {tuple(tilt)} changed D²u by {hess_shift:.3e} or Du by {grad_shift:.3e}")
        return EstimateReport(
            name="gradient_tilt",
            lhs=shifted.lhs,
            rhs=shifted.rhs,
            defect=shifted.defect if invariant else -np.inf,
            location=shifted.location,
            grid_n=grid.n,
            details={
                "tilt": [float(t) for t in tilt],
                "ratio": shifted.details["ratio"],
                "untilted_ratio": base.details["ratio"],
                "lhs_change": shifted.lhs - base.lhs,
                "osc_change": shifted.details["osc"] - base.details["osc"],
                "hess_shift": hess_shift,
                "grad_shift": grad_shift,
            },
        )

    @staticmethod
    def _nearest(grid, point: Sequence[float]) -> Tuple[int, int]:
        i = int(round((point[0] - grid.origin[0]) / grid.h))
        j = int(round((point[1] - grid.origin[1]) / grid.h))
        if not (0 <= i < grid.n and 0 <= j < grid.n):
            raise ValueError(f"point {tuple(point)} lies outside the grid")
        return i, j

    # ------------------------------------------------------------------
    # Volume bound and identities behind it
    # ------------------------------------------------------------------
    def volume_bound_report(
        self,
        u: PotentialField,
        phase: PhaseField,
        R: float,
        center: Optional[Sequence[float]] = None,
        margin: Optional[float] = None,
    ) -> EstimateReport:
        """(1/|B_R|)∫_{B_R} V ≤ 12 C1 (1 + C2‖Du‖² + C3‖Du‖), sup norms over B_{2R}."""
        grid = u.grid
        c = grid.center if center is None else tuple(center)
        if not ball_fits(grid, c, 2.0 * R, margin=0):
            raise ValueError(f"B_2R({c}) with R={R} does not fit in the grid")
        margin = settings.quadrature_margin if margin is None else margin
        ball = ball_region(grid, c, R)
        ball2 = ball_region(grid, c, 2.0 * R)
        V = geometry_service.volume_field(u)
        lhs = integrate(V, ball) / region_area(ball)
        du_norm = float(np.max(np.hypot(*u.du)[ball2.mask]))
        n1, n2 = phase.norms_on(ball2)
        consts = VolumeBoundConstants(R=R, norm_d1=n1, norm_d2=n2)
        rhs = consts.rhs(du_norm)
        return EstimateReport(
            name="volume_bound",
            lhs=lhs,
            rhs=rhs,
            defect=rhs * (1.0 + margin) - lhs,
            location=c,
            grid_n=grid.n,
            details={"C1": consts.C1, "C2": consts.C2, "C3": consts.C3, "du_norm": du_norm, "margin": margin},
        )

    def sigma2_divergence_field(self, u: PotentialField) -> np.ndarray:
        """|2σ2 − div L| with L = (∂2(u2u1) − ∂1(u2²), ∂1(u1u2) − ∂2(u1²))."""
        h = u.grid.h
        u1, u2 = u.du
        L1 = diff_array(u2 * u1, h, (0, 1)) - diff_array(u2 * u2, h, (1, 0))
        L2 = diff_array(u1 * u2, h, (1, 0)) - diff_array(u1 * u1, h, (0, 1))
        div = diff_array(L1, h, (1, 0)) + diff_array(L2, h, (0, 1))
        uxx, uxy, uyy = u.d2u
        return np.abs(2.0 * (uxx * uyy - uxy * uxy) - div)

    def sigma2_divergence_check(self, u: PotentialField) -> EstimateReport:
        grid = u.grid
        region = interior_region(grid, CHECK_MARGIN)
        worst, loc = region_max(self.sigma2_divergence_field(u), region)
        uxx, uxy, uyy = u.d2u
        scale = max(1.0, float(np.max(np.abs(uxx * uyy - uxy * uxy)[region.mask])))
        bound = 1e-10 + SIGMA2_SLOPE * grid.h ** 2 * scale
        return EstimateReport(
            name="sigma2_divergence",
            lhs=worst,
            rhs=bound,
            defect=bound - worst,
            location=grid.node_xy(loc),
            grid_n=grid.n,
            details={"h": grid.h},
        )

    def sigma2_refinement(self, coarse: EstimateReport, fine: EstimateReport) -> EstimateReport:
        """Defect ratio between h and h/2 must lie in [3.5, 4.5]."""
        ratio = coarse.lhs / fine.lhs if fine.lhs > 0 else float("inf")
        return EstimateReport(
            name="sigma2_refinement",
            lhs=ratio,
            rhs=4.0,
            defect=0.5 - abs(ratio - 4.0),
            instance_id=coarse.instance_id,
            details={"defect_h": coarse.lhs, "defect_h2": fine.lhs},
        )

    def volume_identity_check(
        self, u: PotentialField, phase: PhaseField, max_residual: Optional[float] = None
    ) -> EstimateReport:
        """
        V = |secΘ||1 − σ2| where |cosΘ| ≥ ½, V = |cscΘ||σ1| elsewhere.

        Holds up to the residual on solved instances; the relative tolerance is
        2·residual + 1e-9.
        """
        r = self._require_solved(u, phase, max_residual)
        grid = u.grid
        region = interior_region(grid, CHECK_MARGIN)
        frame = geometry_service.frame_fields(u, with_frame=False)
        V = frame.metric.V
        s1, s2 = frame.metric.sigma1, frame.metric.sigma2
        theta = phase.values
        use_sec = np.abs(np.cos(theta)) >= 0.5
        with np.errstate(divide="ignore", invalid="ignore"):
            formula = np.where(
                use_sec, np.abs(1.0 - s2) / np.abs(np.cos(theta)), np.abs(s1) / np.abs(np.sin(theta))
            )
        rel = np.abs(V - formula) / V
        worst, loc = region_max(rel, region)
        tol = 2.0 * r + 1e-9
        return EstimateReport(
            name="volume_identity",
            lhs=float(V[loc]),
            rhs=float(formula[loc]),
            defect=-worst,
            location=grid.node_xy(loc),
            tolerance=tol,
            grid_n=grid.n,
            details={"relative_defect": worst, "residual": r},
        )

    def tan_form_check(
        self, u: PotentialField, phase: PhaseField, max_residual: Optional[float] = None
    ) -> EstimateReport:
        """cosΘ·σ1 + sinΘ·(σ2 − 1) = 0, scaled by V, on a solved instance."""
        r = self._require_solved(u, phase, max_residual)
        grid = u.grid
        region = interior_region(grid, CHECK_MARGIN)
        V = geometry_service.volume_field(u).values
        rel = np.abs(solver_service.tan_form_residual(u, phase).values) / V
        worst, loc = region_max(rel, region)
        return EstimateReport(
            name="tan_form",
            lhs=worst,
            rhs=0.0,
            defect=-worst,
            location=grid.node_xy(loc),
            tolerance=2.0 * r + 1e-9,
            grid_n=grid.n,
            details={"residual": r},
        )


estimates_service = EstimatesService()
