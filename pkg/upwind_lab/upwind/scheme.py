"""The semi-discrete upwind scheme and its leak term."""

import logging

import numpy as np
from numpy.typing import NDArray

from upwind_lab.core import Discretization
from upwind_lab.data_types import CellValues, FaceCoeffs, InvalidParameterError

logger = logging.getLogger(__name__)


class UpwindOperator:
    """Right-hand side of d/dt u_i = (1/π_i) Σ_j (a_{i,j} u_j − a_{j,i} u_i).

    Cells outside the active set are frozen at zero. What flows into a frozen
    cell i is lost and reported as the leak R_i = −(1/π_i) Σ_j a_{i,j} u_j, so that
    du_i/dt = (1/π_i) Σ_j (a_{i,j} u_j − a_{j,i} u_i) + R_i holds on every cell and
    Σ_i (du_i/dt) π_i = Σ_i R_i π_i.
    """

    __slots__ = ("_active", "_inflow", "_outflow", "_volumes")

    def __init__(
        self,
        mesh: Discretization,
        coeffs: FaceCoeffs,
        interior: NDArray[np.bool_] | None = None,
    ) -> None:
        """Initialize the operator.

        Args:
            mesh: The mesh the coefficients were computed on.
            coeffs: Upwind coefficients.
            interior: Active cells; defaults to the interior cells of the mesh.

        Raises:
            InvalidParameterError: If the coefficients or the active set do not
                match the mesh.
        """
        same_faces = np.array_equal(coeffs.faces, mesh.faces)
        if coeffs.n_cells != mesh.n_cells or not same_faces:
            msg = (
                f"Coefficients on {coeffs.n_cells} cells do not match the mesh with "
                f"{mesh.n_cells} cells and {len(mesh.faces)} faces"
            )
            raise InvalidParameterError(msg)
        active = mesh.interior if interior is None else np.asarray(interior, dtype=bool)
        if active.shape != (mesh.n_cells,):
            msg = (
                f"Active set of shape {active.shape} "
                f"does not match {mesh.n_cells} cells"
            )
            raise InvalidParameterError(msg)

        matrix = coeffs.matrix()
        self._active = active
        self._volumes = mesh.volumes
        self._inflow = matrix
        # column sums: Σ_j a_{j,i}, the total outflow rate of cell i
        self._outflow = np.asarray(matrix.sum(axis=0)).ravel()

    @property
    def active(self) -> NDArray[np.bool_]:
        """Cells evolved by the scheme."""
        return self._active

    @property
    def volumes(self) -> NDArray[np.float64]:
        """Cell volumes π_i."""
        return self._volumes

    def cfl_bound(self) -> tuple[float, int]:
        """Largest explicit Euler step keeping the update monotone.

        Returns:
            The bound min_i π_i / Σ_j a_{j,i} over active cells with outflow, and
            the limiting cell (``inf`` and ``-1`` without outflow).
        """
        moving = self._active & (self._outflow > 0.0)
        if not moving.any():
            return np.inf, -1
        ratios = np.full(len(self._volumes), np.inf)
        ratios[moving] = self._volumes[moving] / self._outflow[moving]
        cell = int(np.argmin(ratios))
        return float(ratios[cell]), cell

    def apply(self, u: CellValues) -> tuple[CellValues, CellValues]:
        """Evaluate the right-hand side and the leak.

        Args:
            u: Densities; values outside the active cells are ignored.

        Returns:
            The rates du/dt, zero on frozen cells, and the leak R, zero on
            active cells.
        """
        u = np.where(self._active, u, 0.0)
        rhs = np.zeros_like(u)
        leak = np.zeros_like(u)
        active = self._active
        gain = self._inflow @ u
        rhs[active] = (gain[active] - self._outflow[active] * u[active]) / (
            self._volumes[active]
        )
        frozen = ~active
        leak[frozen] = -gain[frozen] / self._volumes[frozen]
        return rhs, leak


def assemble_rhs(
    mesh: Discretization,
    coeffs: FaceCoeffs,
    u: CellValues,
    *,
    interior: NDArray[np.bool_] | None = None,
) -> tuple[CellValues, CellValues]:
    """Evaluate the upwind scheme once.

    Args:
        mesh: The mesh.
        coeffs: Upwind coefficients on the mesh.
        u: Densities, zero outside the active cells.
        interior: Active cells; defaults to the interior cells of the mesh.

    Returns:
        The rates du/dt and the leak R_i.

    Raises:
        InvalidParameterError: If the shapes do not match the mesh.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_cells,):
        msg = f"Density of shape {u.shape} does not match {mesh.n_cells} cells"
        raise InvalidParameterError(msg)
    operator = UpwindOperator(mesh, coeffs, interior)
    outside = np.abs(u[~operator.active]).max(initial=0.0)
    if outside > 0.0:
        logger.debug("Ignoring densities up to %.3e on frozen cells", outside)
    return operator.apply(u)
