"""Log-singular kernels K^h(x) = φ(|x|) / (|x| + h)^d with a smooth cutoff."""

import logging
from dataclasses import dataclass
from functools import cache

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, special

from upwind_lab.data_types import KERNEL_WIDTH_SUP, InvalidParameterError

logger = logging.getLogger(__name__)

KERNEL_SUPPORT = 2.0


def cutoff(r: NDArray[np.float64] | float) -> NDArray[np.float64]:
    """Cutoff φ(r): one on [0, 1], zero from 2 on, quintic smoothstep in between."""
    r = np.asarray(r, dtype=float)
    t = np.clip(r - 1.0, 0.0, 1.0)
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def cutoff_derivative(r: NDArray[np.float64] | float) -> NDArray[np.float64]:
    """Derivative φ'(r), supported in [1, 2]."""
    r = np.asarray(r, dtype=float)
    t = np.clip(r - 1.0, 0.0, 1.0)
    return -30.0 * t * t * (1.0 - t) ** 2


@dataclass(frozen=True, slots=True)
class KernelSpec:
    """The kernel K^h.

    Attributes:
        h (float): Kernel width, in (0, 1/2).
        dim (int): Space dimension d.
    """

    h: float
    dim: int = 2

    def __post_init__(self) -> None:
        """Check the width."""
        if not 0.0 < self.h < KERNEL_WIDTH_SUP:
            msg = f"Kernel width must lie in (0, 1/2), got {self.h}"
            raise InvalidParameterError(msg)
        if self.dim < 1:
            msg = f"Dimension must be positive, got {self.dim}"
            raise InvalidParameterError(msg)

    def radial(self, r: NDArray[np.float64] | float) -> NDArray[np.float64]:
        """K^h as a function of |x|."""
        r = np.asarray(r, dtype=float)
        return cutoff(r) / (r + self.h) ** self.dim

    def radial_derivative(self, r: NDArray[np.float64] | float) -> NDArray[np.float64]:
        """d/dr of K^h as a function of |x|."""
        r = np.asarray(r, dtype=float)
        return (
            cutoff_derivative(r) / (r + self.h) ** self.dim
            - self.dim * cutoff(r) / (r + self.h) ** (self.dim + 1)
        )


def kernel_eval(spec: KernelSpec, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Evaluate K^h at points of shape ``(m, d)`` or at a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return spec.radial(np.linalg.norm(x))
    return spec.radial(np.linalg.norm(x, axis=-1))


def kernel_gradient(spec: KernelSpec, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """∇K^h at points of shape ``(m, d)``; zero at the origin."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r = np.linalg.norm(x, axis=1)
    scale = np.divide(
        spec.radial_derivative(r), r, out=np.zeros_like(r), where=r > 0.0
    )
    return scale[:, None] * x


@cache
def kernel_l1_norm(h: float, dim: int = 2) -> float:
    """‖K^h‖_{L¹} = |S^{d−1}| ∫_0^2 φ(r) r^{d−1} / (r + h)^d dr."""
    spec = KernelSpec(h, dim)
    sphere = 2.0 * np.pi ** (dim / 2.0) / special.gamma(dim / 2.0)
    value, error = integrate.quad(
        lambda r: float(spec.radial(r)) * r ** (dim - 1),
        0.0,
        KERNEL_SUPPORT,
        points=[1.0],
        epsabs=1e-13,
        epsrel=1e-12,
    )
    logger.debug("‖K^%g‖_L1 = %.12g (quadrature error %.1e)", h, sphere * value, error)
    return float(sphere * value)


def kernel_matrix(points: NDArray[np.float64], spec: KernelSpec) -> NDArray[np.float64]:
    """Dense matrix K_{i,j} = K^h(x̃_i − x̃_j)."""
    diff = points[:, None, :] - points[None, :, :]
    return spec.radial(np.linalg.norm(diff, axis=-1))
