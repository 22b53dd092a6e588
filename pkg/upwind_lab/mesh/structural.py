import logging
from dataclasses import dataclass
from functools import singledispatch

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from upwind_lab.core import Discretization
from upwind_lab.mesh.general import GeneralMesh
from upwind_lab.mesh.polygon import PolygonMesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class StructuralReport:
    """Measured constants of the structural assumptions on a mesh.

    All constants are exact extrema over the cells or faces of the mesh.

    Attributes:
        n_cells (int): Number of cells.
        n_interior (int): Number of interior cells.
        dx (float): Discretization size δx.
        diameter_constant (float): max_i diam(supp χ_i) / π_i^{1/d}.
        diameter_ratio_min (float): min_i diam(supp χ_i) / δx.
        volume_ratio (float): max_i π_i / min_i π_i.
        volume_lower (float): min_i π_i / δx^d.
        volume_upper (float): max_i π_i / δx^d.
        face_bound (float | None): δx · max ‖n_{i,j}‖_∞, None for sharp faces.
        max_cells_per_ball (int): Largest number of barycenters in a ball of radius δx.
        flagged_cells (tuple[int, ...]): Cells with π_i / δx^d below ``volume_floor``.
    """

    n_cells: int
    n_interior: int
    dx: float
    diameter_constant: float
    diameter_ratio_min: float
    volume_ratio: float
    volume_lower: float
    volume_upper: float
    face_bound: float | None
    max_cells_per_ball: int
    flagged_cells: tuple[int, ...]

    def as_dict(self) -> dict[str, float | int | None | list[int]]:
        """Return the report as JSON compatible values."""
        return {
            "n_cells": self.n_cells,
            "n_interior": self.n_interior,
            "dx": self.dx,
            "diameter_constant": self.diameter_constant,
            "diameter_ratio_min": self.diameter_ratio_min,
            "volume_ratio": self.volume_ratio,
            "volume_lower": self.volume_lower,
            "volume_upper": self.volume_upper,
            "face_bound": self.face_bound,
            "max_cells_per_ball": self.max_cells_per_ball,
            "flagged_cells": list(self.flagged_cells),
        }


def _report(
    mesh: Discretization,
    face_sup: NDArray[np.float64] | None,
    volume_floor: float,
) -> StructuralReport:
    d = mesh.dim
    dx = mesh.dx
    volumes = mesh.volumes
    diameters = mesh.support_diameters
    scaled = volumes / dx**d
    tree = cKDTree(mesh.barycenters)
    counts = tree.query_ball_point(mesh.barycenters, r=dx, return_length=True)
    report = StructuralReport(
        n_cells=mesh.n_cells,
        n_interior=int(mesh.interior.sum()),
        dx=dx,
        diameter_constant=float((diameters / volumes ** (1.0 / d)).max()),
        diameter_ratio_min=float(diameters.min() / dx),
        volume_ratio=float(volumes.max() / volumes.min()),
        volume_lower=float(scaled.min()),
        volume_upper=float(scaled.max()),
        face_bound=None if face_sup is None else float(dx * face_sup.max(initial=0.0)),
        max_cells_per_ball=int(np.max(counts)),
        flagged_cells=tuple(np.flatnonzero(scaled < volume_floor).tolist()),
    )
    logger.debug("Structural report: %s", report)
    return report


@singledispatch
def validate_structural(
    mesh: Discretization, *, volume_floor: float = 1e-3
) -> StructuralReport:
    """Measure the constants of the structural assumptions of a mesh.

    Args:
        mesh: A polygon or generalized mesh.
        volume_floor: Threshold on π_i / δx^d below which cells are flagged.

    Returns:
        StructuralReport: The measured constants.
    """
    msg = f"Unsupported mesh type {type(mesh).__name__}"
    raise TypeError(msg)


@validate_structural.register
def _(mesh: PolygonMesh, *, volume_floor: float = 1e-3) -> StructuralReport:
    return _report(mesh, None, volume_floor)


@validate_structural.register
def _(mesh: GeneralMesh, *, volume_floor: float = 1e-3) -> StructuralReport:
    return _report(mesh, mesh.face_sup_norms(), volume_floor)
