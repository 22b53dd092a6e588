"""Continuous kernel double integrals and their discrete counterparts."""

import logging
from dataclasses import dataclass

import numpy as np
import shapely
from numpy.typing import NDArray
from shapely.geometry.base import BaseGeometry

from upwind_lab.core import Discretization
from upwind_lab.data_types import InvalidParameterError, QuadratureSpec
from upwind_lab.discretize.projections import SpatialField, project_to_cell
from upwind_lab.seminorm.kernel import KERNEL_SUPPORT, KernelSpec
from upwind_lab.seminorm.seminorm import kernel_double_sums

logger = logging.getLogger(__name__)


def continuous_double_integral(
    f: SpatialField,
    h: float,
    region: BaseGeometry,
    p: float = 1.0,
    *,
    spacing: float = 1.0 / 64.0,
) -> float:
    """Midpoint approximation of ∫∫_{region²} K^h(x − y) |f(x) − f(y)|^p dx dy.

    Args:
        f: Scalar function of space.
        h: Kernel width.
        region: Integration region in the plane.
        p: Exponent.
        spacing: Side of the midpoint cells.

    Returns:
        float: The double integral.

    Raises:
        InvalidParameterError: If the spacing is not positive.
    """
    if spacing <= 0.0:
        msg = f"Spacing must be positive, got {spacing}"
        raise InvalidParameterError(msg)
    spec = KernelSpec(h, 2)
    x0, y0, x1, y1 = region.bounds
    nx = int(np.ceil((x1 - x0) / spacing))
    ny = int(np.ceil((y1 - y0) / spacing))
    gx, gy = np.meshgrid(
        x0 + spacing * (np.arange(nx) + 0.5), y0 + spacing * (np.arange(ny) + 0.5)
    )
    inside = shapely.contains_xy(region, gx, gy)
    values = np.zeros((ny, nx))
    inner = np.column_stack([gx[inside], gy[inside]])
    values[inside] = np.asarray(f(inner), dtype=float)

    reach = min(int(np.ceil(KERNEL_SUPPORT / spacing)), max(nx, ny))
    total = 0.0
    # offsets (a, b) with b > 0, or b = 0 and a > 0; the mirrored offsets double them
    for b in range(reach + 1):
        for a in range(-reach if b else 1, reach + 1):
            weight = float(spec.radial(spacing * np.hypot(a, b)))
            if weight == 0.0 or b >= ny or abs(a) >= nx:
                continue
            src = (slice(0, ny - b), slice(max(0, -a), nx - max(0, a)))
            dst = (slice(b, ny), slice(max(0, a), nx - max(0, -a)))
            both = inside[src] & inside[dst]
            diff = np.abs(values[src] - values[dst])[both] ** p
            total += weight * float(diff.sum())
    return 2.0 * total * spacing**4


@dataclass(frozen=True, slots=True)
class Comparability:
    """Discrete kernel sum of P_C f against the continuous double integral of f.

    Attributes:
        h (float): Kernel width.
        discrete (float): ΣΣ K^h(x_i − x_j) |u_i − u_j|^p π_i π_j over interior cells.
        continuous (float): The double integral over Ω.
        ratio (float): ``discrete / continuous``.
        dx_over_h (float): δx/h, the relative size of the expected deviation.
    """

    h: float
    discrete: float
    continuous: float
    ratio: float
    dx_over_h: float


def comparability_ratio(  # noqa: PLR0913
    mesh: Discretization,
    f: SpatialField,
    h: float,
    p: float = 1.0,
    *,
    spec: QuadratureSpec | None = None,
    spacing: float | None = None,
) -> Comparability:
    """Compare the discrete double sum of u = P_C f with its continuous counterpart.

    Only interior cells enter the discrete sum, so Ω should be the union of
    the interior cells for the two quantities to be comparable.
    """
    u = project_to_cell(mesh, f, spec)
    interior = mesh.interior
    points = np.asarray(mesh.barycenters, dtype=float)[interior]
    discrete = float(
        kernel_double_sums(u[interior], mesh.volumes[interior], points, [h], p)[0]
    )
    continuous = continuous_double_integral(
        f, h, mesh.domain, p, spacing=spacing or mesh.dx / 8.0
    )
    ratio = discrete / continuous if continuous > 0.0 else float("nan")
    logger.debug(
        "Kernel sums at h = %.4g: discrete %.6g, continuous %.6g",
        h,
        discrete,
        continuous,
    )
    return Comparability(h, discrete, continuous, ratio, mesh.dx / h)
