"""Smoothing kernels: W(r, h) and its radial derivative.

Both kernels have a compact support of ``kappa * h`` with kappa = 2, so a
particle only interacts with neighbours closer than twice its smoothing
length.  Values and gradients vanish identically outside the support.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class KernelKind(enum.Enum):
    CUBIC_SPLINE = "cubic-spline"
    WENDLAND_C2 = "wendland-c2"


def _cubic_sigma(h: float, dim: int) -> float:
    # Normalisation of the M4 cubic spline on support 2h.
    if dim == 2:
        return 10.0 / (7.0 * math.pi * h * h)
    if dim == 3:
        return 1.0 / (math.pi * h ** 3)
    raise ValueError(f"unsupported dimension {dim}")


def _wendland_sigma(h: float, dim: int) -> float:
    # Normalisation of the Wendland C2 kernel on support 2h.
    if dim == 2:
        return 7.0 / (4.0 * math.pi * h * h)
    if dim == 3:
        return 21.0 / (16.0 * math.pi * h ** 3)
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class SmoothingKernel:
    """Immutable kernel description; evaluation is pure and thread-safe.

    ``w`` and ``dw_dr`` accept scalars or arrays of distances.  ``grad``
    returns the spatial gradient with respect to the first particle,
    antisymmetric under exchange of the pair.
    """

    kind: KernelKind = KernelKind.CUBIC_SPLINE
    h: float = 1.0
    dim: int = 2
    kappa: float = field(default=2.0, init=False)

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError(f"smoothing length must be positive, got {self.h}")
        if self.dim not in (2, 3):
            raise ValueError(f"spatial dimension must be 2 or 3, got {self.dim}")
        if not isinstance(self.kind, KernelKind):
            object.__setattr__(self, "kind", KernelKind(self.kind))

    @property
    def support_radius(self) -> float:
        return self.kappa * self.h

    @property
    def sigma(self) -> float:
        if self.kind is KernelKind.CUBIC_SPLINE:
            return _cubic_sigma(self.h, self.dim)
        return _wendland_sigma(self.h, self.dim)

    def w(self, r):
        """Kernel value at distance r >= 0."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0.0):
            raise ValueError("kernel evaluated at negative distance")
        q = r / self.h
        sig = self.sigma
        if self.kind is KernelKind.CUBIC_SPLINE:
            inner = 1.0 - 1.5 * q * q + 0.75 * q ** 3
            outer = 0.25 * (2.0 - q) ** 3
            val = np.where(q < 1.0, inner, np.where(q < 2.0, outer, 0.0))
        else:
            val = np.where(q < 2.0, (1.0 - 0.5 * q) ** 4 * (2.0 * q + 1.0), 0.0)
        out = sig * val
        return float(out) if out.ndim == 0 else out

    def dw_dr(self, r):
        """Radial derivative dW/dr; non-positive everywhere."""
        r = np.asarray(r, dtype=float)
        q = r / self.h
        sig_h = self.sigma / self.h
        if self.kind is KernelKind.CUBIC_SPLINE:
            inner = -3.0 * q + 2.25 * q * q
            outer = -0.75 * (2.0 - q) ** 2
            val = np.where(q < 1.0, inner, np.where(q < 2.0, outer, 0.0))
        else:
            val = np.where(q < 2.0, -5.0 * q * (1.0 - 0.5 * q) ** 3, 0.0)
        out = sig_h * val
        return float(out) if out.ndim == 0 else out

    def grad(self, r_vec: np.ndarray) -> np.ndarray:
        """Gradient of W with respect to the first particle's position.

        The gradient at a coincident pair (|r_vec| = 0) is defined as the
        zero vector; the radial limit of the magnitude is zero while the
        direction is undefined.
        """
        r_vec = np.asarray(r_vec, dtype=float)
        single = r_vec.ndim == 1
        vec = np.atleast_2d(r_vec)
        r = np.linalg.norm(vec, axis=1)
        safe_r = np.where(r > 0.0, r, 1.0)
        scale = np.where(r > 0.0, self.dw_dr(np.where(r > 0, r, 0.0)) / safe_r, 0.0)
        out = vec * scale[:, None]
        return out[0] if single else out


def eval_w(kernel: SmoothingKernel, r) -> float:
    """W(r, h) for a scalar distance r >= 0."""
    if r < 0.0:
        raise ValueError(f"distance must be non-negative, got {r}")
    return float(kernel.w(r))


def eval_grad_w(kernel: SmoothingKernel, r_vec) -> np.ndarray:
    """Kernel gradient for a single displacement vector."""
    return kernel.grad(np.asarray(r_vec, dtype=float))
