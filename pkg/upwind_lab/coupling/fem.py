"""P1 finite elements on the triangulation underlying a hat mesh."""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse.linalg import spsolve

from upwind_lab.data_types import CellValues, FEMError
from upwind_lab.mesh.hat import HatMesh
from upwind_lab.utils.logging import LOGGING_TRACE

logger = logging.getLogger(__name__)

_AREA_TOL = 1e-14
_RESIDUAL_TOL = 1e-10


class P1Space:
    """Continuous piecewise linear functions vanishing on the boundary nodes.

    The basis functions are the cell functions of the hat mesh, so the cell
    functions of the advection scheme are elements of the finite element space.
    """

    def __init__(self, mesh: HatMesh) -> None:
        """Initialize the space.

        Args:
            mesh: The hat mesh whose cell functions form the basis.

        Raises:
            FEMError: If a triangle is degenerate or no node is free.
        """
        tri = mesh.triangulation
        scale = max(float(tri.areas.max(initial=0.0)), 1.0)
        degenerate = np.flatnonzero(tri.areas <= _AREA_TOL * scale)
        if len(degenerate):
            msg = f"Triangle {int(degenerate[0])} is degenerate"
            raise FEMError(msg)
        if not mesh.interior.any():
            msg = "The triangulation has no free node"
            raise FEMError(msg)
        self.mesh = mesh

    @property
    def free(self) -> NDArray[np.bool_]:
        """Nodes off the Dirichlet boundary."""
        return self.mesh.interior

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """K_ij = ∫ ∇χ_i·∇χ_j."""
        tri = self.mesh.triangulation
        local = np.einsum("tkd,tld->tkl", tri.gradients, tri.gradients)
        local *= tri.areas[:, None, None]
        return self._assemble(local)

    @cached_property
    def mass(self) -> sparse.csr_matrix:
        """M_ij = ∫ χ_i χ_j."""
        tri = self.mesh.triangulation
        local = (np.ones((3, 3)) + np.eye(3))[None, :, :] / 12.0
        return self._assemble(local * tri.areas[:, None, None])

    def _assemble(self, local: NDArray[np.float64]) -> sparse.csr_matrix:
        triangles = self.mesh.triangulation.triangles
        rows = np.repeat(triangles, 3, axis=1).ravel()
        cols = np.tile(triangles, (1, 3)).ravel()
        n = self.mesh.n_cells
        return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    def load(self, values: CellValues) -> NDArray[np.float64]:
        """∫ g^χ χ_i for g^χ = Σ_j g_j χ_j."""
        return self.mass @ np.asarray(values, dtype=float)

    def gradient(self, potential: NDArray[np.float64]) -> NDArray[np.float64]:
        """Gradient of a P1 function on every triangle, shape ``(m, 2)``."""
        tri = self.mesh.triangulation
        return np.einsum("tkd,tk->td", tri.gradients, potential[tri.triangles])

    def h1_seminorm(self, potential: NDArray[np.float64]) -> float:
        """(∫ |∇φ|²)^{1/2}."""
        return float(np.sqrt(max(float(potential @ (self.stiffness @ potential)), 0.0)))


@dataclass(frozen=True, slots=True)
class PoissonSolution:
    """Result of a Dirichlet Poisson solve.

    Attributes:
        potential (NDArray[np.float64]): Nodal values, zero on the boundary.
        gradient (NDArray[np.float64]): ∇φ on every triangle.
        residual (float): max_i |∫∇χ_i·∇φ − ∫ g^χ χ_i| over free nodes,
            relative to the load.
    """

    potential: NDArray[np.float64]
    gradient: NDArray[np.float64]
    residual: float


def fem_poisson_solve(space: P1Space, values: CellValues) -> PoissonSolution:
    """Solve ∫ ∇v·∇φ = ∫ v g^χ for every basis function v with φ = 0 on ∂Ω.

    Args:
        space: The P1 space.
        values: Source coefficients g_i of g^χ = Σ g_i χ_i.

    Returns:
        PoissonSolution: Potential, its gradient and the variational residual.

    Raises:
        FEMError: If the stiffness system is singular.
    """
    load = space.load(values)
    free = np.flatnonzero(space.free)
    potential = np.zeros(space.mesh.n_cells)
    if np.any(load[free]):
        system = space.stiffness[free][:, free].tocsc()
        solution = np.asarray(spsolve(system, load[free]), dtype=float)
        if not np.isfinite(solution).all():
            msg = "The stiffness system is singular"
            raise FEMError(msg)
        potential[free] = solution

    defect = np.abs(space.stiffness @ potential - load)[free]
    scale = max(float(np.abs(load).max(initial=0.0)), 1e-300)
    residual = float(defect.max(initial=0.0)) / scale
    if residual > _RESIDUAL_TOL:
        logger.warning("Poisson solve residual %.3e exceeds tolerance", residual)
    logger.log(
        LOGGING_TRACE,
        "Poisson solve on %d free nodes, residual %.2e",
        len(free),
        residual,
    )
    return PoissonSolution(potential, space.gradient(potential), residual)
