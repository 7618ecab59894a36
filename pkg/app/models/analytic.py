"""
Analytic potentials: named presets with closed-form derivatives up to order three.

Presets are used as Dirichlet data, as manufactured exact solutions and in the
rescaling/tilting checks. Every preset supports the transformations

    u  ->  sign * u(R x) / R**2 + tilt . x

through the ``sign``, ``scale`` and ``tilt`` fields, so ``-u`` (the reflected
instance), the rescaled ``u(Rx)/R²`` and ``u + c.x`` stay analytic.
"""
from typing import Annotated, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

Pair = Tuple[np.ndarray, np.ndarray]
Triple = Tuple[np.ndarray, np.ndarray, np.ndarray]
Quad = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


class AnalyticPotential(BaseModel):
    sign: float = Field(1.0, description="Overall sign (+1 or -1)")
    scale: float = Field(1.0, gt=0, description="R in u(Rx)/R²")
    tilt: Tuple[float, float] = (0.0, 0.0)

    class Config:
        frozen = True

    # --- raw formulas, implemented by presets ---------------------------
    def _value(self, x, y):
        raise NotImplementedError

    def _grad(self, x, y) -> Pair:
        raise NotImplementedError

    def _hess(self, x, y) -> Triple:
        raise NotImplementedError

    def _third(self, x, y) -> Quad:
        raise NotImplementedError

    # --- transformed evaluation -----------------------------------------
    def value(self, x, y) -> np.ndarray:
        R = self.scale
        raw = self._value(R * np.asarray(x, float), R * np.asarray(y, float))
        return self.sign * raw / (R * R) + self.tilt[0] * x + self.tilt[1] * y

    def grad(self, x, y) -> Pair:
        R = self.scale
        gx, gy = self._grad(R * np.asarray(x, float), R * np.asarray(y, float))
        return (self.sign * gx / R + self.tilt[0], self.sign * gy / R + self.tilt[1])

    def hess(self, x, y) -> Triple:
        R = self.scale
        hxx, hxy, hyy = self._hess(R * np.asarray(x, float), R * np.asarray(y, float))
        return (self.sign * hxx, self.sign * hxy, self.sign * hyy)

    def third(self, x, y) -> Quad:
        R = self.scale
        t = self._third(R * np.asarray(x, float), R * np.asarray(y, float))
        return tuple(self.sign * R * c for c in t)

    def negated(self) -> "AnalyticPotential":
        return self.model_copy(
            update={"sign": -self.sign, "tilt": (-self.tilt[0], -self.tilt[1])}
        )

    def rescaled(self, R: float) -> "AnalyticPotential":
        """ũ(x) = u(Rx)/R² (tilt is rescaled with u)."""
        if R <= 0:
            raise ValueError(f"rescaling factor must be positive (got {R})")
        return self.model_copy(
            update={"scale": self.scale * R, "tilt": (self.tilt[0] / R, self.tilt[1] / R)}
        )

    def tilted(self, cx: float, cy: float = 0.0) -> "AnalyticPotential":
        return self.model_copy(update={"tilt": (self.tilt[0] + cx, self.tilt[1] + cy)})


class QuadraticPotential(AnalyticPotential):
    """u = ½(a11 x² + 2 a12 xy + a22 y²) + b1 x + b2 y + c."""

    kind: Literal["quadratic"] = "quadratic"
    a11: float = 0.0
    a12: float = 0.0
    a22: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    c: float = 0.0

    def _value(self, x, y):
        return 0.5 * (self.a11 * x * x + 2 * self.a12 * x * y + self.a22 * y * y) + self.b1 * x + self.b2 * y + self.c

    def _grad(self, x, y):
        return (self.a11 * x + self.a12 * y + self.b1, self.a12 * x + self.a22 * y + self.b2)

    def _hess(self, x, y):
        one = np.ones_like(np.asarray(x, float))
        return (self.a11 * one, self.a12 * one, self.a22 * one)

    def _third(self, x, y):
        zero = np.zeros_like(np.asarray(x, float))
        return (zero, zero, zero, zero)


class QuadraticSinePotential(AnalyticPotential):
    """Quadratic plus eps·sin(kx x)·sin(ky y)."""

    kind: Literal["quadratic_sine"] = "quadratic_sine"
    a11: float = 1.0
    a12: float = 0.0
    a22: float = 1.0
    eps: float = 0.1
    kx: float = 1.0
    ky: float = 1.0

    def _value(self, x, y):
        quad = 0.5 * (self.a11 * x * x + 2 * self.a12 * x * y + self.a22 * y * y)
        return quad + self.eps * np.sin(self.kx * x) * np.sin(self.ky * y)

    def _grad(self, x, y):
        sx, cx = np.sin(self.kx * x), np.cos(self.kx * x)
        sy, cy = np.sin(self.ky * y), np.cos(self.ky * y)
        return (
            self.a11 * x + self.a12 * y + self.eps * self.kx * cx * sy,
            self.a12 * x + self.a22 * y + self.eps * self.ky * sx * cy,
        )

    def _hess(self, x, y):
        kx, ky, e = self.kx, self.ky, self.eps
        sx, cx = np.sin(kx * x), np.cos(kx * x)
        sy, cy = np.sin(ky * y), np.cos(ky * y)
        return (
            self.a11 - e * kx * kx * sx * sy,
            self.a12 + e * kx * ky * cx * cy,
            self.a22 - e * ky * ky * sx * sy,
        )

    def _third(self, x, y):
        kx, ky, e = self.kx, self.ky, self.eps
        sx, cx = np.sin(kx * x), np.cos(kx * x)
        sy, cy = np.sin(ky * y), np.cos(ky * y)
        return (
            -e * kx ** 3 * cx * sy,
            -e * kx * kx * ky * sx * cy,
            -e * kx * ky * ky * cx * sy,
            -e * ky ** 3 * sx * cy,
        )


class HarmonicCubicPotential(AnalyticPotential):
    """u = c (x³ − 3xy²); F(D²u) ≡ 0."""

    kind: Literal["harmonic_cubic"] = "harmonic_cubic"
    c: float = 1.0

    def _value(self, x, y):
        return self.c * (x ** 3 - 3 * x * y * y)

    def _grad(self, x, y):
        return (3 * self.c * (x * x - y * y), -6 * self.c * x * y)

    def _hess(self, x, y):
        return (6 * self.c * x, -6 * self.c * y, -6 * self.c * x)

    def _third(self, x, y):
        one = np.ones_like(np.asarray(x, float))
        zero = np.zeros_like(one)
        return (6 * self.c * one, zero, -6 * self.c * one, zero)


class HarmonicExpPotential(AnalyticPotential):
    """u = c e^{kx} cos(ky); F(D²u) ≡ 0."""

    kind: Literal["harmonic_exp"] = "harmonic_exp"
    c: float = 0.25
    k: float = 1.0

    def _value(self, x, y):
        return self.c * np.exp(self.k * x) * np.cos(self.k * y)

    def _grad(self, x, y):
        e, k = self.c * np.exp(self.k * x), self.k
        return (k * e * np.cos(k * y), -k * e * np.sin(k * y))

    def _hess(self, x, y):
        e, k = self.c * np.exp(self.k * x), self.k
        c, s = np.cos(k * y), np.sin(k * y)
        return (k * k * e * c, -k * k * e * s, -k * k * e * c)

    def _third(self, x, y):
        e, k = self.c * np.exp(self.k * x), self.k
        c, s = np.cos(k * y), np.sin(k * y)
        k3 = k ** 3
        return (k3 * e * c, -k3 * e * s, -k3 * e * c, k3 * e * s)


class SlagCubicPotential(AnalyticPotential):
    """
    Nonquadratic convex solution of det D²u = 1, i.e. F(D²u) ≡ π/2:

        u = a x³/6 + b x²/2 + y² / (2 (a x + b)),   a x + b > 0.
    """

    kind: Literal["slag_cubic"] = "slag_cubic"
    a: float = 0.5
    b: float = 2.0

    def _w(self, x):
        w = self.a * x + self.b
        if np.any(w <= 0):
            raise ValueError(f"slag_cubic needs a*x + b > 0 on the domain (a={self.a}, b={self.b})")
        return w

    def _value(self, x, y):
        w = self._w(x)
        return self.a * x ** 3 / 6 + self.b * x * x / 2 + y * y / (2 * w)

    def _grad(self, x, y):
        w = self._w(x)
        return (self.a * x * x / 2 + self.b * x - self.a * y * y / (2 * w * w), y / w)

    def _hess(self, x, y):
        a, w = self.a, self._w(x)
        return (w + a * a * y * y / w ** 3, -a * y / (w * w), 1.0 / w + 0 * y)

    def _third(self, x, y):
        a, w = self.a, self._w(x)
        return (
            a - 3 * a ** 3 * y * y / w ** 4,
            2 * a * a * y / w ** 3,
            -a / (w * w) + 0 * y,
            0 * w * y,
        )


PotentialSpec = Annotated[
    Union[
        QuadraticPotential,
        QuadraticSinePotential,
        HarmonicCubicPotential,
        HarmonicExpPotential,
        SlagCubicPotential,
    ],
    Field(discriminator="kind"),
]
