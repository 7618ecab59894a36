"""
Hằng số của test function P và của volume bound.

P = ν ln ρ + α(x·Du − u) + β|Du|²/2 + ln max(b̄, γ⁻¹) with ν = 6, q = 2/3
fixed; α, β are chosen from (γ, Γ) so that every smallness condition used at
the maximum point of P holds.
"""
from typing import Any, ClassVar, Dict, Tuple

import numpy as np
from pydantic import BaseModel, Field

# Denominators appearing in the smallness conditions.
LEDGER_DENOM = 292.0
GRADIENT_FACTOR = 16.0


class ConstantLedger(BaseModel):
    NU: ClassVar[float] = 6.0
    Q: ClassVar[float] = 2.0 / 3.0

    alpha: float
    beta: float
    gamma: float
    Gamma: float = Field(..., description="1 + ‖u‖_{C¹}")

    class Config:
        frozen = True

    @property
    def nu(self) -> float:
        return self.NU

    @property
    def q(self) -> float:
        return self.Q

    @staticmethod
    def epsilon(theta):
        return np.sin(np.abs(theta)) / 4.0

    @staticmethod
    def eta(theta):
        return np.sin(np.abs(theta))

    @staticmethod
    def alpha_threshold(gamma: float, Gamma: float) -> float:
        """α must stay below (γ/(292·16·Γ))³ for a β window to exist."""
        return (gamma / (LEDGER_DENOM * GRADIENT_FACTOR * Gamma)) ** 3

    @staticmethod
    def beta_window(alpha: float, gamma: float, Gamma: float) -> Tuple[float, float]:
        """Open interval of β allowed by α^{4/3}/β < γ/292 and 16Γ < |α|/β."""
        a = abs(alpha)
        return LEDGER_DENOM * a ** (4.0 / 3.0) / gamma, a / (GRADIENT_FACTOR * Gamma)

    def inequalities(self) -> Dict[str, bool]:
        """The eight inequality families, evaluated verbatim."""
        a, b, g, G, nu = abs(self.alpha), self.beta, self.gamma, self.Gamma, self.nu
        D = LEDGER_DENOM
        a43 = a ** (4.0 / 3.0)
        g23 = g ** (2.0 / 3.0)
        bG43 = (b * G) ** (4.0 / 3.0)
        f43 = GRADIENT_FACTOR ** (4.0 / 3.0)
        return {
            "parameter_ranges": 0 < a < 1 and 0 < b < 1 and nu > 1 and 0 < g < 1 and G >= 1,
            "feasibility_pair": a43 / b < g / D and GRADIENT_FACTOR * G < a / b,
            "alpha_beta_window": a43 < b < a,
            "quadratic_smallness": (
                a * a < (b / D) * g23 < b / 32.0 and b * G * G < g23 / D < 1.0 / 32.0
            ),
            "gradient_coupling": b * G < a / GRADIENT_FACTOR,
            "four_thirds_smallness": a43 < (b / D) * g23 and bG43 < (b / D) * g23,
            "four_thirds_gamma": a43 < (b / D) * g and bG43 < (b / D) * g,
            "implication_chain": (
                bG43 < a43 / f43 < b * g / (f43 * D) < b * g / D < b * g23 / D
                and a * a < (b * g) ** 1.5 / D ** 1.5 < b * g / D
            ),
        }

    def is_valid(self) -> bool:
        return all(self.inequalities().values())

    def summary(self) -> Dict[str, Any]:
        return {**self.model_dump(), "nu": self.nu, "q": self.q, "checks": self.inequalities()}


class VolumeBoundConstants(BaseModel):
    """C1, C2, C3 of the averaged volume bound on B_R."""

    R: float = Field(..., gt=0)
    norm_d1: float = Field(..., ge=0)
    norm_d2: float = Field(..., ge=0)

    class Config:
        frozen = True

    @property
    def C1(self) -> float:
        return 2.0 / np.sqrt(2.0 - np.sqrt(2.0))

    @property
    def C2(self) -> float:
        return 2.0 / self.R ** 2 + (48.0 / np.pi ** 2) * self.norm_d1 ** 2 + (4.0 / np.pi) * self.norm_d2

    @property
    def C3(self) -> float:
        return 1.0 / self.R + (8.0 / np.pi) * self.norm_d1

    def rhs(self, du_norm: float) -> float:
        return 12.0 * self.C1 * (1.0 + self.C2 * du_norm ** 2 + self.C3 * du_norm)


class PFunctionResult(BaseModel):
    """P trên quả cầu đã rescale; ``values`` là NaN ngoài miền xác định."""

    values: Any
    region_mask: Any
    max_value: float
    argmax: Tuple[int, int]
    inner_max: float
    outer_max: float
    on_outer_layer: bool

    class Config:
        arbitrary_types_allowed = True
