"""The finite linear system of periodic virtual coordinates for a constant field."""

import logging
from dataclasses import dataclass

import numpy as np
import shapely
from numpy.typing import NDArray

from upwind_lab.core import Discretization
from upwind_lab.data_types import (
    FaceCoeffs,
    InvalidParameterError,
    PeriodicityError,
    QuadratureSpec,
)
from upwind_lab.discretize.projections import SpatialField, face_fluxes, project_to_face
from upwind_lab.mesh.periodic import PeriodicStructure
from upwind_lab.vcoords.diffusion import DiffusionMatrix, block_decompose

logger = logging.getLogger(__name__)

_UNIT_TOL = 1e-12


class ConstantFieldCoefficients:
    """Coefficients P_F b_c of constant fields on one mesh.

    When every face function is a fixed direction times a nonnegative weight,
    a_{q,p} = (b_c·m_f)⁺ and a_{p,q} = (b_c·m_f)⁻ with the face moments
    m_f = ∫ n_{q,p}, so two flux evaluations serve every direction. Otherwise
    each direction is projected separately.
    """

    __slots__ = ("_mesh", "_moments", "_spec")

    def __init__(
        self, mesh: Discretization, spec: QuadratureSpec | None = None
    ) -> None:
        """Initialize the coefficients.

        Args:
            mesh: The mesh.
            spec: Quadrature point counts.
        """
        self._mesh = mesh
        self._spec = spec
        active = np.flatnonzero(mesh.face_interior).tolist()
        self._moments: NDArray[np.float64] | None = None
        if all(mesh.face_direction(f) is not None for f in active):
            self._moments = np.column_stack(
                [
                    face_fluxes(mesh, _constant(np.eye(mesh.dim)[k]), spec)
                    for k in range(mesh.dim)
                ]
            )

    def __call__(self, direction: NDArray[np.float64]) -> FaceCoeffs:
        """Return P_F of the constant field equal to ``direction``."""
        mesh = self._mesh
        if self._moments is None:
            return project_to_face(mesh, _constant(direction), self._spec)
        flux = self._moments @ direction
        return FaceCoeffs(
            mesh.faces, np.maximum(flux, 0.0), np.maximum(-flux, 0.0), mesh.n_cells
        )


def _constant(value: NDArray[np.float64]) -> SpatialField:
    value = np.asarray(value, dtype=float)
    return lambda x: np.broadcast_to(value, (len(x), len(value))).copy()


@dataclass(frozen=True, slots=True)
class PeriodicAssembly:
    """The system (Φ − Aᵀ) x̂ = φ of one direction.

    Attributes:
        direction (NDArray[np.float64]): Unit direction b_c.
        transfer (NDArray[np.float64]): A_{ij} = Σ_m a_{[m](i),j}, shape
            ``(|V₀|, |V₀|)``.
        outflow (NDArray[np.float64]): Diagonal Φ_{ii} = Σ_l A_{li}.
        rhs (NDArray[np.float64]): φ_i = Σ_j Σ_m a_{[m](j),i} [m]L − b_c π_i,
            shape ``(|V₀|, d)``.
        volumes (NDArray[np.float64]): Pattern volumes π_i.
        representatives (NDArray[np.int64]): Mesh cell whose neighbourhood
            supplied the coefficients of each pattern slot.
        column_defect (float): Largest |column sum| of Φ − Aᵀ.
    """

    direction: NDArray[np.float64]
    transfer: NDArray[np.float64]
    outflow: NDArray[np.float64]
    rhs: NDArray[np.float64]
    volumes: NDArray[np.float64]
    representatives: NDArray[np.int64]
    column_defect: float

    @property
    def operator(self) -> NDArray[np.float64]:
        """Φ − Aᵀ with row sums exactly zero."""
        matrix = -self.transfer.T.copy()
        np.fill_diagonal(matrix, 0.0)
        np.fill_diagonal(matrix, -matrix.sum(axis=1))
        return matrix

    def diffusion(self) -> DiffusionMatrix:
        """Φ − Aᵀ split into its irreducible blocks."""
        return block_decompose(self.operator, tol=max(1e-10, 10.0 * self.column_defect))

    def triplets(self) -> list[tuple[int, int, float]]:
        """Nonzero entries of Φ − Aᵀ as ``(row, column, value)``."""
        matrix = self.operator
        rows, cols = np.nonzero(matrix)
        return [
            (int(i), int(j), float(matrix[i, j]))
            for i, j in zip(rows.tolist(), cols.tolist(), strict=True)
        ]


def representative_cells(structure: PeriodicStructure) -> NDArray[np.int64]:
    """For every pattern slot, the cell of that slot deepest inside Ω.

    Raises:
        PeriodicityError: If some slot has no cell whose faces all lie in Ω.
    """
    mesh = structure.mesh
    boundary = mesh.domain.boundary
    depth = shapely.distance(shapely.points(mesh.barycenters), boundary)
    depth[~mesh.interior] = -np.inf
    outer_faces = mesh.faces[~mesh.face_interior]
    touching = np.zeros(mesh.n_cells, dtype=bool)
    touching[outer_faces.ravel()] = True
    depth[touching] = -np.inf
    slots = structure.sigma[:, 2]
    chosen = np.empty(structure.pattern_size, dtype=np.int64)
    for slot in range(structure.pattern_size):
        candidates = np.flatnonzero(slots == slot)
        best = candidates[int(np.argmax(depth[candidates]))]
        if not np.isfinite(depth[best]):
            msg = f"No cell of pattern slot {slot} has all its faces inside the domain"
            raise PeriodicityError(msg)
        chosen[slot] = best
    return chosen


def assemble_periodic_system(
    structure: PeriodicStructure | None,
    direction: NDArray[np.float64],
    coefficients: ConstantFieldCoefficients | None = None,
    *,
    spec: QuadratureSpec | None = None,
) -> PeriodicAssembly:
    """Assemble the reduced periodic system for the constant field b ≡ b_c.

    The coefficients a_{[m](j),i} of pattern cell i are read off the
    representative cell of its slot, so translates missing from the mesh are
    replaced by their periodic values.

    Args:
        structure: The validated periodic structure.
        direction: The constant field b_c; normalized with a warning if not unit.
        coefficients: Shared constant-field coefficients of the mesh.
        spec: Quadrature point counts used when ``coefficients`` is not given.

    Returns:
        PeriodicAssembly: A, Φ and φ of the direction.

    Raises:
        PeriodicityError: If no periodic structure is given or the mesh holds
            no complete period.
        InvalidParameterError: If the direction vanishes.
    """
    if structure is None:
        msg = "Assembling the periodic system requires a periodic structure"
        raise PeriodicityError(msg)
    mesh = structure.mesh
    direction = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        msg = "The direction b_c must not vanish"
        raise InvalidParameterError(msg)
    if abs(norm - 1.0) > _UNIT_TOL:
        logger.warning("Direction %s is not a unit vector; normalizing", direction)
        direction = direction / norm
    coefficients = coefficients or ConstantFieldCoefficients(mesh, spec)
    coeffs = coefficients(direction)

    size = structure.pattern_size
    reps = representative_cells(structure)
    transfer = np.zeros((size, size))
    shifts = np.zeros((size, mesh.dim))
    faces = coeffs.faces
    for slot, cell in enumerate(reps.tolist()):
        origin = structure.offset(cell)
        rows = np.flatnonzero((faces == cell).any(axis=1))
        for f in rows.tolist():
            p, q = faces[f].tolist()
            # a_{other, cell}: transfer out of the representative
            if p == cell:
                other, outgoing = q, coeffs.forward[f]
            else:
                other, outgoing = p, coeffs.backward[f]
            if outgoing == 0.0:
                continue
            j = structure.slot(other)
            offset = structure.offset(other) - origin
            transfer[j, slot] += outgoing
            shifts[slot] += outgoing * structure.shift(offset)

    outflow = transfer.sum(axis=0)
    volumes = mesh.volumes[structure.pattern]
    rhs = shifts - direction[None, :] * volumes[:, None]
    matrix = np.diag(outflow) - transfer.T
    column_defect = float(np.abs(matrix.sum(axis=0)).max(initial=0.0))
    logger.debug(
        "Periodic system for b_c = %s: %d unknowns, column defect %.2e",
        np.array2string(direction, precision=4),
        size,
        column_defect,
    )
    return PeriodicAssembly(
        direction=direction,
        transfer=transfer,
        outflow=outflow,
        rhs=rhs,
        volumes=volumes,
        representatives=reps,
        column_defect=column_defect,
    )
