"""
Geometry of the gradient graph (x, Du(x)).

Service tính phổ Hessian, metric cảm sinh g = I + (D²u)², dạng thể tích V,
độ dốc b = log V, dạng cơ bản thứ hai h_ijk và toán tử Laplace–Beltrami.
All methods broadcast over numpy arrays, so the same code serves single
points, random samples and whole grids.
"""
import logging
from typing import Sequence, Tuple

import numpy as np

from app.core.stencils import diff_array
from app.models.geometry import FrameData, GeometryFrame, HessianSpectrum, MetricData
from app.models.grid import ScalarField
from app.models.phase import PhaseField
from app.models.potential import PotentialField

logger = logging.getLogger(__name__)

# Spectra closer than this (relative) reuse angle 0 for frame rotation.
DEGENERATE_GAP = 1e-9


class GeometryService:
    """Closed-form 2×2 linear algebra and metric operators."""

    # ------------------------------------------------------------------
    # Spectrum and metric
    # ------------------------------------------------------------------
    def spectrum_from_components(self, h11, h12, h22) -> HessianSpectrum:
        """
        Eigen-decomposition of [[h11, h12], [h12, h22]].

        Returns λ1 ≥ λ2 and the angle θ ∈ (−π/2, π/2] of the λ1-eigenvector
        (cos θ, sin θ); equal eigenvalues give θ = 0.
        """
        a = np.asarray(h11, dtype=float)
        b = np.asarray(h12, dtype=float)
        d = np.asarray(h22, dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(d))):
            raise ValueError("Hessian entries must be finite")
        mean = 0.5 * (a + d)
        rad = np.hypot(0.5 * (a - d), b)
        angle = 0.5 * np.arctan2(2.0 * b, a - d)
        angle = np.where(angle <= -0.5 * np.pi, angle + np.pi, angle)
        return HessianSpectrum(lambda1=mean + rad, lambda2=mean - rad, angle=angle)

    def hessian_spectrum(self, H) -> HessianSpectrum:
        """Spectrum of H (shape (..., 2, 2)); the input is symmetrized first."""
        H = np.asarray(H, dtype=float)
        if H.shape[-2:] != (2, 2):
            raise ValueError(f"expected (..., 2, 2) matrices, got shape {H.shape}")
        off = 0.5 * (H[..., 0, 1] + H[..., 1, 0])
        return self.spectrum_from_components(H[..., 0, 0], off, H[..., 1, 1])

    def metric_data(self, spec: HessianSpectrum) -> MetricData:
        l1 = np.asarray(spec.lambda1, dtype=float)
        l2 = np.asarray(spec.lambda2, dtype=float)
        return MetricData(
            g11=1.0 / (1.0 + l1 * l1),
            g22=1.0 / (1.0 + l2 * l2),
            V=np.hypot(1.0, l1) * np.hypot(1.0, l2),
            b=0.5 * (np.log1p(l1 * l1) + np.log1p(l2 * l2)),
            sigma1=l1 + l2,
            sigma2=l1 * l2,
        )

    def inverse_metric(self, h11, h12, h22) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Exact inverse (g^{11}, g^{12}, g^{22}) of I + H² in grid coordinates.

        det(I + H²) = σ1² + (1 − σ2)², a sum of squares, so it never cancels.
        """
        a = np.asarray(h11, dtype=float)
        b = np.asarray(h12, dtype=float)
        d = np.asarray(h22, dtype=float)
        m11 = 1.0 + a * a + b * b
        m12 = b * (a + d)
        m22 = 1.0 + b * b + d * d
        s1 = a + d
        s2 = a * d - b * b
        det = s1 * s1 + (1.0 - s2) * (1.0 - s2)
        return m22 / det, -m12 / det, m11 / det

    # ------------------------------------------------------------------
    # Frame quantities
    # ------------------------------------------------------------------
    def rotate_third_derivatives(self, t111, t112, t122, t222, angle) -> Tuple[np.ndarray, ...]:
        """Components T(e_a, e_b, e_c) in the frame e1 = (cos, sin), e2 = (−sin, cos)."""
        t111, t112, t122, t222, angle = np.broadcast_arrays(
            *(np.asarray(v, dtype=float) for v in (t111, t112, t122, t222, angle))
        )
        T = np.empty(t111.shape + (2, 2, 2))
        T[..., 0, 0, 0] = t111
        T[..., 0, 0, 1] = T[..., 0, 1, 0] = T[..., 1, 0, 0] = t112
        T[..., 0, 1, 1] = T[..., 1, 0, 1] = T[..., 1, 1, 0] = t122
        T[..., 1, 1, 1] = t222
        c, s = np.cos(angle), np.sin(angle)
        Q = np.empty(angle.shape + (2, 2))
        Q[..., 0, 0], Q[..., 0, 1] = c, -s
        Q[..., 1, 0], Q[..., 1, 1] = s, c
        R = np.einsum("...ijk,...ia,...jb,...kc->...abc", T, Q, Q, Q)
        return R[..., 0, 0, 0], R[..., 0, 0, 1], R[..., 0, 1, 1], R[..., 1, 1, 1]

    def frame_angle(self, spec: HessianSpectrum) -> np.ndarray:
        l1 = np.asarray(spec.lambda1, dtype=float)
        gap = np.abs(l1 - np.asarray(spec.lambda2, dtype=float))
        return np.where(gap < DEGENERATE_GAP * (1.0 + np.abs(l1)), 0.0, spec.angle)

    def second_fundamental_form(self, third_derivs: Sequence, spec: HessianSpectrum) -> FrameData:
        """
        h_ijk = √g^ii √g^jj √g^kk u_ijk.

        ``third_derivs`` = (u111, u112, u122, u222) already expressed in the
        diagonalizing frame of ``spec``.
        """
        u111, u112, u122, u222 = (np.asarray(t, dtype=float) for t in third_derivs)
        m = self.metric_data(spec)
        r1, r2 = np.sqrt(m.g11), np.sqrt(m.g22)
        return FrameData(
            h111=r1 * r1 * r1 * u111,
            h112=r1 * r1 * r2 * u112,
            h122=r1 * r2 * r2 * u122,
            h222=r2 * r2 * r2 * u222,
        )

    def frame_fields(self, u: PotentialField, with_frame: bool = True) -> GeometryFrame:
        """GeometryFrame arrays at every node of the grid."""
        h11, h12, h22 = u.d2u
        spec = self.spectrum_from_components(h11, h12, h22)
        metric = self.metric_data(spec)
        frame = None
        if with_frame:
            rotated = self.rotate_third_derivatives(*u.d3u, self.frame_angle(spec))
            frame = self.second_fundamental_form(rotated, spec)
        return GeometryFrame(spectrum=spec, metric=metric, frame=frame)

    def b_field(self, u: PotentialField) -> ScalarField:
        spec = self.spectrum_from_components(*u.d2u)
        return ScalarField(grid=u.grid, values=self.metric_data(spec).b)

    def volume_field(self, u: PotentialField) -> ScalarField:
        spec = self.spectrum_from_components(*u.d2u)
        return ScalarField(grid=u.grid, values=self.metric_data(spec).V)

    # ------------------------------------------------------------------
    # Metric differential operators
    # ------------------------------------------------------------------
    def laplace_beltrami(self, v: ScalarField, u: PotentialField, phase: PhaseField) -> ScalarField:
        """
        Δ_g v = g^{ij} v_ij − g^{jp} u_pq Θ_q v_j.

        Θ derivatives are the analytic ones carried by the phase; u and v
        are differenced on the grid. Values near the boundary use one-sided
        stencils; checks read only interior nodes.
        """
        if not (v.grid == u.grid == phase.grid):
            raise ValueError("laplace_beltrami needs v, u and theta on one grid")
        h = v.grid.h
        uxx, uxy, uyy = u.d2u
        g11, g12, g22 = self.inverse_metric(uxx, uxy, uyy)
        tx, ty = phase.dtheta
        p1 = uxx * tx + uxy * ty
        p2 = uxy * tx + uyy * ty
        w1 = g11 * p1 + g12 * p2
        w2 = g12 * p1 + g22 * p2
        vx = diff_array(v.values, h, (1, 0))
        vy = diff_array(v.values, h, (0, 1))
        vxx = diff_array(v.values, h, (2, 0))
        vxy = diff_array(v.values, h, (1, 1))
        vyy = diff_array(v.values, h, (0, 2))
        out = g11 * vxx + 2.0 * g12 * vxy + g22 * vyy - (w1 * vx + w2 * vy)
        return ScalarField(grid=v.grid, values=out)

    def grad_norm_g(self, v: ScalarField, u: PotentialField) -> ScalarField:
        """|∇_g v|² = g^{ij} v_i v_j."""
        if v.grid != u.grid:
            raise ValueError("grad_norm_g needs v and u on one grid")
        h = v.grid.h
        g11, g12, g22 = self.inverse_metric(*u.d2u)
        vx = diff_array(v.values, h, (1, 0))
        vy = diff_array(v.values, h, (0, 1))
        out = g11 * vx * vx + 2.0 * g12 * vx * vy + g22 * vy * vy
        return ScalarField(grid=v.grid, values=np.maximum(out, 0.0))


geometry_service = GeometryService()
