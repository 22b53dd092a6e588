"""Admissible families of virtual coordinates over a grid of directions."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import shapely
from numpy.typing import NDArray

from upwind_lab.core import Discretization
from upwind_lab.data_types import (
    CellValues,
    DiffusionMatrixError,
    InvalidParameterError,
    PeriodicityError,
    QuadratureSpec,
    RangeConditionError,
    UnsolvableDirectionError,
)
from upwind_lab.discretize.norms import discrete_norm
from upwind_lab.mesh.periodic import PeriodicStructure, support_shapes
from upwind_lab.seminorm.seminorm import VirtualCoordinates
from upwind_lab.settings import get_settings
from upwind_lab.vcoords.diffusion import solve_bounded
from upwind_lab.vcoords.periodic_system import (
    ConstantFieldCoefficients,
    assemble_periodic_system,
)
from upwind_lab.vcoords.residue import residue_field

logger = logging.getLogger(__name__)

FAMILY_HEADER = ("direction", "bx", "by", "cell_id", "x_hat", "y_hat", "residue_norm")

_RANGE_TOL = 1e-9
_INTERIOR_RESIDUE_TOL = 1e-10


def direction_grid(count: int, dim: int = 2) -> NDArray[np.float64]:
    """Unit directions: equispaced on the circle, or a Fibonacci sphere in 3D.

    Raises:
        InvalidParameterError: If the count is not positive or the dimension
            is not 2 or 3.
    """
    if count < 1:
        msg = f"Direction count must be positive, got {count}"
        raise InvalidParameterError(msg)
    if dim == 2:  # noqa: PLR2004
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if dim == 3:  # noqa: PLR2004
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        radius = np.sqrt(1.0 - z**2)
        angles = np.pi * (1.0 + np.sqrt(5.0)) * k
        return np.column_stack([radius * np.cos(angles), radius * np.sin(angles), z])
    msg = f"Direction grids exist in dimension 2 or 3, got {dim}"
    raise InvalidParameterError(msg)


@dataclass(frozen=True, slots=True)
class AdmissibleFamily:
    """Virtual coordinates x̂(b_c) for every direction of a grid.

    Attributes:
        directions (NDArray[np.float64]): Unit directions, shape ``(k, d)``.
        coordinates (NDArray[np.float64]): x̂_i(b_c), shape ``(k, n, d)``.
        residues (NDArray[np.float64]): Residue of each direction, shape ``(k, n, d)``.
        barycenters (NDArray[np.float64]): Cell barycenters, used for b = 0.
        drift_relative (float): M_γ, the largest |x̂_i − x̂_{i'}| over faces.
        drift_absolute (float): M_β, the largest |x̂_i − x_i|.
        residue_max (NDArray[np.float64]): r̂_max, the largest residue length
            over the grid, per cell.
        residue_bound (float): M_ξ = ‖r̂_max‖_{L^p} / |Ω|^{1/p}.
        residue_exponent (float): The exponent p of M_ξ.
        interior_residue (float): Largest residue length on interior cells.
        column_defect (float): Largest column sum of the periodic operators.
    """

    directions: NDArray[np.float64]
    coordinates: NDArray[np.float64]
    residues: NDArray[np.float64]
    barycenters: NDArray[np.float64]
    drift_relative: float
    drift_absolute: float
    residue_max: NDArray[np.float64]
    residue_bound: float
    residue_exponent: float
    interior_residue: float
    column_defect: float

    def direction_index(self, b: NDArray[np.float64]) -> int | None:
        """Grid direction closest to b/|b|, or None for b = 0."""
        b = np.asarray(b, dtype=float)
        norm = float(np.linalg.norm(b))
        if norm == 0.0:
            return None
        return int(np.argmax(self.directions @ (b / norm)))

    def lookup(self, b: NDArray[np.float64]) -> VirtualCoordinates:
        """Coordinates x̂(b) of a constant field; barycenters for b = 0."""
        k = self.direction_index(b)
        if k is None:
            return VirtualCoordinates(self.barycenters.copy())
        return VirtualCoordinates(self.coordinates[k].copy())

    def coordinates_for(self, values: CellValues) -> VirtualCoordinates:
        """Per-cell coordinates x̃_i = x̂_i(b_i) for cell values b_i of shape (n, d)."""
        values = np.asarray(values, dtype=float)
        norms = np.linalg.norm(values, axis=1)
        unit = values / np.where(norms > 0.0, norms, 1.0)[:, None]
        index = np.argmax(unit @ self.directions.T, axis=1)
        cells = np.arange(len(values))
        points = np.where(
            (norms > 0.0)[:, None], self.coordinates[index, cells], self.barycenters
        )
        return VirtualCoordinates(points)

    def rows(self) -> list[tuple[float | int, ...]]:
        """Rows of the family CSV, one per direction and cell."""
        out: list[tuple[float | int, ...]] = []
        lengths = np.linalg.norm(self.residues, axis=2)
        for k, direction in enumerate(self.directions.tolist()):
            for i, point in enumerate(self.coordinates[k].tolist()):
                residue = float(lengths[k, i])
                out.append((k, *direction[:2], i, *point[:2], residue))
        return out


def covered_cells(structure: PeriodicStructure) -> NDArray[np.bool_]:
    """Cells of V_Ω: supports meeting Ω and all neighbors of interior cells."""
    mesh = structure.mesh
    shapes = support_shapes(mesh, np.arange(mesh.n_cells))
    if shapes:
        covered = shapely.intersects(np.asarray(shapes, dtype=object), mesh.domain)
    else:
        covered = np.ones(mesh.n_cells, dtype=bool)
    faces = mesh.faces
    if len(faces):
        touching = faces[mesh.interior[faces].any(axis=1)]
        covered[touching.ravel()] = True
    return np.asarray(covered, dtype=bool)


def _solve_direction(
    structure: PeriodicStructure,
    direction: NDArray[np.float64],
    coefficients: ConstantFieldCoefficients,
    covered: NDArray[np.bool_],
) -> tuple[NDArray[np.float64], NDArray[np.float64], float]:
    mesh = structure.mesh
    barycenters = np.asarray(mesh.barycenters, dtype=float)
    assembly = assemble_periodic_system(structure, direction, coefficients)
    pattern = barycenters[structure.pattern]
    try:
        operator = assembly.diffusion()
        drift = solve_bounded(
            operator,
            assembly.rhs - operator.matrix @ pattern,
            tol=max(_RANGE_TOL, 10.0 * assembly.column_defect),
        )
    except (DiffusionMatrixError, RangeConditionError) as exc:
        msg = (
            f"Periodic system for direction {direction.tolist()} "
            f"cannot be solved: {exc}"
        )
        raise UnsolvableDirectionError(msg) from exc

    coords = barycenters.copy()
    sigma = structure.sigma[covered]
    coords[covered] = (pattern + drift)[sigma[:, 2]] + sigma[:, :2] @ structure.lattice
    residue = residue_field(
        mesh,
        coefficients(direction),
        np.broadcast_to(direction, coords.shape),
        VirtualCoordinates(coords),
    )
    return coords, residue, assembly.column_defect


def build_admissible_family(
    mesh: Discretization,
    structure: PeriodicStructure | None,
    direction_count: int | None = None,
    *,
    spec: QuadratureSpec | None = None,
    exponent: float = 1.0,
) -> AdmissibleFamily:
    """Solve the periodic system for every grid direction and measure the family.

    Coordinates of the pattern are extended by x̂_{[m](i)} = x̂_i + [m]L to the
    cells of V_Ω; every other cell keeps its barycenter. Residues are taken
    against the exact cell values b̃_i = b_c of the constant field.

    Args:
        mesh: The periodic mesh.
        structure: Its validated periodic structure.
        direction_count: Size of the direction grid; defaults to the settings.
        spec: Quadrature point counts of the coefficients.
        exponent: Exponent p of the residue bound M_ξ.

    Returns:
        AdmissibleFamily: Coordinates, residues and the measured constants.

    Raises:
        PeriodicityError: If no structure is given or it belongs to another mesh.
        UnsolvableDirectionError: If the system of some direction has no solution.
    """
    if structure is None or structure.mesh is not mesh:
        msg = "An admissible family requires the periodic structure of the mesh"
        raise PeriodicityError(msg)
    settings = get_settings()
    directions = direction_grid(direction_count or settings.direction_count, mesh.dim)
    coefficients = ConstantFieldCoefficients(mesh, spec or settings.quadrature)
    covered = covered_cells(structure)

    def solve(
        direction: NDArray[np.float64],
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], float]:
        return _solve_direction(structure, direction, coefficients, covered)

    with ThreadPoolExecutor(max_workers=settings.workers) as pool:
        results = list(pool.map(solve, directions))

    coordinates = np.stack([r[0] for r in results])
    residues = np.stack([r[1] for r in results])
    column_defect = max(r[2] for r in results)
    barycenters = np.asarray(mesh.barycenters, dtype=float)

    drift_absolute = float(np.linalg.norm(coordinates - barycenters, axis=2).max())
    faces = mesh.faces
    drift_relative = 0.0
    if len(faces):
        gaps = coordinates[:, faces[:, 0]] - coordinates[:, faces[:, 1]]
        drift_relative = float(np.linalg.norm(gaps, axis=2).max())
    lengths = np.linalg.norm(residues, axis=2)
    residue_max = lengths.max(axis=0)
    residue_bound = discrete_norm(residue_max, exponent, volumes=mesh.volumes)
    if np.isfinite(exponent):
        residue_bound /= mesh.domain.area ** (1.0 / exponent)
    interior_residue = float(lengths[:, mesh.interior].max(initial=0.0))

    if interior_residue > _INTERIOR_RESIDUE_TOL:
        logger.warning(
            "Interior residue %.3e of the family is not zero", interior_residue
        )
    logger.info(
        "Admissible family over %d directions: M_beta = %.4g, M_gamma = %.4g, "
        "M_xi = %.4g, interior residue %.2e",
        len(directions),
        drift_absolute,
        drift_relative,
        residue_bound,
        interior_residue,
    )
    return AdmissibleFamily(
        directions=directions,
        coordinates=coordinates,
        residues=residues,
        barycenters=barycenters,
        drift_relative=drift_relative,
        drift_absolute=drift_absolute,
        residue_max=residue_max,
        residue_bound=float(residue_bound),
        residue_exponent=exponent,
        interior_residue=interior_residue,
        column_defect=column_defect,
    )
