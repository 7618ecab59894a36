"""Per-point geometry of the gradient graph; fields may be scalars or node arrays."""
from typing import Any, Optional

from pydantic import BaseModel


class _ArrayModel(BaseModel):
    class Config:
        arbitrary_types_allowed = True
        frozen = True


class HessianSpectrum(_ArrayModel):
    """λ1 ≥ λ2 and the angle of the λ1-eigenvector (cos, sin)."""

    lambda1: Any
    lambda2: Any
    angle: Any


class MetricData(_ArrayModel):
    g11: Any
    g22: Any
    V: Any
    b: Any
    sigma1: Any
    sigma2: Any

    @property
    def gii(self):
        return (self.g11, self.g22)


class FrameData(_ArrayModel):
    """h_ijk trong frame chéo hoá D²u."""

    h111: Any
    h112: Any
    h122: Any
    h222: Any


class GeometryFrame(_ArrayModel):
    spectrum: HessianSpectrum
    metric: MetricData
    frame: Optional[FrameData] = None
