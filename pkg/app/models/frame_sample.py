"""
FrameSample: giá trị tại một điểm trong frame chéo hóa D²u.

All fields are 1-D arrays of equal length so a batch of 10⁵ samples is one
object; scalar inputs are promoted to length-1 arrays.
"""
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel

_SCALARS = ("lambda1", "lambda2", "h111", "h112", "h122", "h222", "theta")


class FrameSample(BaseModel):
    lambda1: Any
    lambda2: Any
    h111: Any
    h112: Any
    h122: Any
    h222: Any
    theta: Any
    dtheta: Any
    d2theta_diag: Any

    class Config:
        arbitrary_types_allowed = True

    def model_post_init(self, __context: Any) -> None:
        for name in _SCALARS:
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        n = self.lambda1.shape[0]
        self.dtheta = np.asarray(self.dtheta, dtype=float).reshape(2, -1)
        self.d2theta_diag = np.asarray(self.d2theta_diag, dtype=float).reshape(2, -1)
        sizes = {name: getattr(self, name).shape for name in _SCALARS}
        sizes["dtheta"] = self.dtheta.shape[1:]
        sizes["d2theta_diag"] = self.d2theta_diag.shape[1:]
        bad = {k: v for k, v in sizes.items() if v != (n,)}
        if bad:
            raise ValueError(f"FrameSample fields must share length {n}: {bad}")
        if np.any(np.abs(self.theta) >= np.pi):
            raise ValueError("FrameSample theta must lie in (-pi, pi)")

    @classmethod
    def constrained(cls, lambda1, lambda2, h112, h122, theta, dtheta, d2theta_diag) -> "FrameSample":
        """h111 = √g^11 Θ_1 − h122 and h222 = √g^22 Θ_2 − h112."""
        l1 = np.atleast_1d(np.asarray(lambda1, dtype=float))
        l2 = np.atleast_1d(np.asarray(lambda2, dtype=float))
        dt = np.asarray(dtheta, dtype=float).reshape(2, -1)
        h112 = np.atleast_1d(np.asarray(h112, dtype=float))
        h122 = np.atleast_1d(np.asarray(h122, dtype=float))
        return cls(
            lambda1=l1,
            lambda2=l2,
            h111=dt[0] / np.hypot(1.0, l1) - h122,
            h112=h112,
            h122=h122,
            h222=dt[1] / np.hypot(1.0, l2) - h112,
            theta=theta,
            dtheta=dt,
            d2theta_diag=d2theta_diag,
        )

    @property
    def size(self) -> int:
        return int(self.lambda1.shape[0])

    @property
    def g11(self) -> np.ndarray:
        return 1.0 / (1.0 + self.lambda1 ** 2)

    @property
    def g22(self) -> np.ndarray:
        return 1.0 / (1.0 + self.lambda2 ** 2)

    def row(self, k: int) -> Dict[str, Any]:
        """One sample as plain floats, for failure dumps."""
        out: Dict[str, Any] = {name: float(getattr(self, name)[k]) for name in _SCALARS}
        out["dtheta"] = [float(v) for v in self.dtheta[:, k]]
        out["d2theta_diag"] = [float(v) for v in self.d2theta_diag[:, k]]
        return out
