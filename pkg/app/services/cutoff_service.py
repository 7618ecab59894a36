"""
Cutoff functions for the averaged volume bound.

ρ1..ρ5 split the phase range [−π, π] into pieces where either |secΘ| or
|cscΘ| is at most C1 = 1/cos(3π/8); χ is the radial cutoff of B1 inside B2.
Each ρ_j keeps its listed support and ramps across the full overlap with its
neighbour (width π/4), so Σρ_j = 1 on [−π, π].
"""
import logging
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from app.models.ledger import VolumeBoundConstants
from app.schemas.report import EstimateReport

logger = logging.getLogger(__name__)

PI = np.pi
RHO_D1_BOUND = 8.0 / PI
RHO_D2_BOUND = 64.0 / PI ** 2
# Radial ramp on [1, 2] of width 1 cannot have slope below 1 anywhere; the
# quadratic spline attains these.
CHI_D1_BOUND = 2.0
CHI_D2_BOUND = 4.0
# Strict bounds |Dχ| < 1, |D²χ| < 2 that the ramp above cannot meet.
CHI_D1_CRITERION = 1.0
CHI_D2_CRITERION = 2.0
SAMPLES = 10_000
BOUND_MARGIN = 1e-9

Profile = Literal["quadratic_spline", "quintic"]


class CutoffBoundError(ValueError):
    """Cutoff vi phạm bound đạo hàm trên tập mẫu dày."""


def _profile(kind: Profile) -> Tuple[Callable, Callable, Callable]:
    """(S, S', S'') of a monotone ramp from 0 at t=0 to 1 at t=1."""
    if kind == "quadratic_spline":
        def s(t):
            return np.where(t <= 0.5, 2 * t * t, 1 - 2 * (1 - t) ** 2)

        def ds(t):
            return np.where(t <= 0.5, 4 * t, 4 * (1 - t))

        def d2s(t):
            return np.where(t <= 0.5, 4.0, -4.0) * np.ones_like(t)

        return s, ds, d2s
    if kind == "quintic":
        return (
            lambda t: t ** 3 * (10 - 15 * t + 6 * t * t),
            lambda t: 30 * t * t * (1 - t) ** 2,
            lambda t: 60 * t * (1 - t) * (1 - 2 * t),
        )
    raise ValueError(f"unknown ramp profile {kind!r}")


class Bump(BaseModel):
    """
    Piecewise bump on the θ-axis.

    ``up`` and ``down`` are the ramp intervals; ``None`` means the bump is 1
    up to the end of [−π, π] on that side.
    """

    name: str
    support: Tuple[float, float]
    up: Optional[Tuple[float, float]]
    down: Optional[Tuple[float, float]]
    profile: Profile = "quadratic_spline"
    uses_secant: bool = True

    def evaluate(self, theta, order: int = 0):
        theta = np.asarray(theta, dtype=float)
        S = _profile(self.profile)[order]
        out = np.zeros_like(theta) if order else np.ones_like(theta)
        if self.up is not None:
            a, c = self.up
            w = c - a
            t = np.clip((theta - a) / w, 0.0, 1.0)
            inside = (theta > a) & (theta < c)
            if order == 0:
                out = np.where(theta <= a, 0.0, np.where(inside, S(t), out))
            else:
                out = np.where(inside, S(t) / w ** order, out)
        if self.down is not None:
            d, b = self.down
            w = b - d
            t = np.clip((b - theta) / w, 0.0, 1.0)
            inside = (theta > d) & (theta < b)
            if order == 0:
                out = np.where(theta >= b, 0.0, np.where(inside, S(t), out))
            else:
                out = np.where(inside, (-1) ** order * S(t) / w ** order, out)
        return out

    def plateau(self) -> Tuple[float, float]:
        return (self.up[1] if self.up else -PI, self.down[0] if self.down else PI)


class CutoffSet(BaseModel):
    rho: List[Bump]
    profile: Profile
    bounds: Dict[str, float] = Field(default_factory=dict)

    def chi(self, r, order: int = 0):
        """Radial χ(|x|): 1 on r ≤ 1, ramp on [1, 2], 0 beyond."""
        r = np.asarray(r, dtype=float)
        S = _profile(self.profile)[order]
        t = np.clip(r - 1.0, 0.0, 1.0)
        inside = (r > 1.0) & (r < 2.0)
        if order == 0:
            return np.where(r <= 1.0, 1.0, np.where(inside, 1.0 - S(t), 0.0))
        return np.where(inside, -S(t), 0.0)

    def total(self, theta) -> np.ndarray:
        return sum(b.evaluate(theta) for b in self.rho)


class CutoffService:
    def _bumps(self, profile: Profile) -> List[Bump]:
        e = PI / 8
        return [
            Bump(name="rho1", support=(-9 * e, -5 * e), up=None, down=(-7 * e, -5 * e), profile=profile),
            Bump(name="rho2", support=(-7 * e, -e), up=(-7 * e, -5 * e), down=(-3 * e, -e),
                 profile=profile, uses_secant=False),
            Bump(name="rho3", support=(-3 * e, 3 * e), up=(-3 * e, -e), down=(e, 3 * e), profile=profile),
            Bump(name="rho4", support=(e, 7 * e), up=(e, 3 * e), down=(5 * e, 7 * e),
                 profile=profile, uses_secant=False),
            Bump(name="rho5", support=(5 * e, 9 * e), up=(5 * e, 7 * e), down=None, profile=profile),
        ]

    def build_cutoffs(self, profile: Profile = "quadratic_spline") -> CutoffSet:
        """
        Build χ and ρ1..ρ5 and validate them on a dense sample.

        Raises
        ------
        CutoffBoundError
            if a sampled derivative exceeds its bound or a support/plateau
            condition fails.
        """
        cutoffs = CutoffSet(rho=self._bumps(profile), profile=profile)
        theta = np.linspace(-PI, PI, SAMPLES)
        problems = []
        observed: Dict[str, float] = {}
        for bump in cutoffs.rho:
            d1 = float(np.max(np.abs(bump.evaluate(theta, 1))))
            d2 = float(np.max(np.abs(bump.evaluate(theta, 2))))
            observed[f"{bump.name}_d1"], observed[f"{bump.name}_d2"] = d1, d2
            if d1 > RHO_D1_BOUND + BOUND_MARGIN:
                problems.append(f"{bump.name}: max|ρ'| = {d1:.6g} > 8/π")
            if d2 > RHO_D2_BOUND + BOUND_MARGIN:
                problems.append(f"{bump.name}: max|ρ''| = {d2:.6g} > 64/π²")
            values = bump.evaluate(theta)
            lo, hi = bump.support
            outside = (theta <= lo) | (theta >= hi)
            if np.any(values[outside] != 0.0) or np.any((values < 0) | (values > 1)):
                problems.append(f"{bump.name}: support or range violated")
            p_lo, p_hi = bump.plateau()
            on_plateau = (theta >= p_lo) & (theta <= p_hi)
            if np.any(values[on_plateau] != 1.0):
                problems.append(f"{bump.name}: plateau violated")
        if np.min(cutoffs.total(theta)) < 1.0 - BOUND_MARGIN:
            problems.append("Σρ_j < 1 somewhere on [−π, π]")

        r = np.linspace(0.0, 2.5, SAMPLES)
        chi_d1 = float(np.max(np.abs(cutoffs.chi(r, 1))))
        # D²χ has eigenvalues χ'' and χ'/r
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r > 0, np.abs(cutoffs.chi(r, 1)) / r, 0.0)
        chi_d2 = float(max(np.max(np.abs(cutoffs.chi(r, 2))), np.max(radial)))
        observed["chi_d1"], observed["chi_d2"] = chi_d1, chi_d2
        if chi_d1 > CHI_D1_BOUND + BOUND_MARGIN or chi_d2 > CHI_D2_BOUND + BOUND_MARGIN:
            problems.append(f"chi: |Dχ| = {chi_d1:.6g}, |D²χ| = {chi_d2:.6g}")

        if problems:
            logger.error(f"✗ Cutoff construction failed ({profile}): {'; '.join(problems)}")
            raise CutoffBoundError("; ".join(problems))
        cutoffs.bounds = observed
        logger.debug(f"Cutoffs ({profile}) validated: {observed}")
        return cutoffs

    def cutoff_report(self, cutoffs: CutoffSet) -> EstimateReport:
        """
        ρ bounds against 8/π and 64/π². χ is held to CHI_D1_BOUND/CHI_D2_BOUND, which
        relax |Dχ| < 1, |D²χ| < 2; the details flag when the relaxed bounds were needed.
        """
        worst_d1 = max(v for k, v in cutoffs.bounds.items() if k.startswith("rho") and k.endswith("_d1"))
        worst_d2 = max(v for k, v in cutoffs.bounds.items() if k.startswith("rho") and k.endswith("_d2"))
        margin = min(RHO_D1_BOUND - worst_d1, RHO_D2_BOUND - worst_d2)
        relaxed = (
            cutoffs.bounds["chi_d1"] >= CHI_D1_CRITERION or cutoffs.bounds["chi_d2"] >= CHI_D2_CRITERION
        )
        if relaxed:
            logger.warning(
                f"⚠ χ uses relaxed bounds: |Dχ| = {cutoffs.bounds['chi_d1']:.6g} (criterion < {CHI_D1_CRITERION:g}), "
                f"|D²χ| = {cutoffs.bounds['chi_d2']:.6g} (criterion < {CHI_D2_CRITERION:g})"
            )
        return EstimateReport(
            name="cutoffs",
            lhs=worst_d1,
            rhs=RHO_D1_BOUND,
            defect=margin,
            tolerance=BOUND_MARGIN,
            details={
                **cutoffs.bounds,
                "profile": cutoffs.profile,
                "rho_d2_bound": RHO_D2_BOUND,
                "chi_bounds_relaxed": relaxed,
                "chi_d1_bound": CHI_D1_BOUND,
                "chi_d2_bound": CHI_D2_BOUND,
                "chi_d1_criterion": CHI_D1_CRITERION,
                "chi_d2_criterion": CHI_D2_CRITERION,
            },
        )

    def sec_csc_check(self, cutoffs: CutoffSet) -> EstimateReport:
        """|secΘ| ≤ C1 on supp ρ1, ρ3, ρ5 and |cscΘ| ≤ C1 on supp ρ2, ρ4 (inside (−π, π))."""
        C1 = VolumeBoundConstants(R=1.0, norm_d1=0.0, norm_d2=0.0).C1
        worst, where = -np.inf, None
        for bump in cutoffs.rho:
            lo, hi = max(bump.support[0], -PI), min(bump.support[1], PI)
            theta = np.linspace(lo, hi, SAMPLES + 2)[1:-1]
            trig = np.cos(theta) if bump.uses_secant else np.sin(theta)
            value = 1.0 / np.abs(trig)
            k = int(np.argmax(value))
            if value[k] > worst:
                worst, where = float(value[k]), (bump.name, float(theta[k]))
        return EstimateReport(
            name="sec_csc_bound",
            lhs=worst,
            rhs=C1,
            defect=C1 - worst,
            tolerance=1e-9 * C1,
            details={"worst_cutoff": where[0], "theta": where[1]},
        )


cutoff_service = CutoffService()
