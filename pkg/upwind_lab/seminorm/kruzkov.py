"""Exact decomposition of the time derivative of the kernel double sum.

Along the scheme, with S_{i,j} = sgn(u_i − u_j),

    d/dt ΣΣ K_{i,j} |u_i − u_j| π_i π_j = A_K + D_K + 2 N_K + R_K

where A_K collects the transport of the kernel by the coefficients, D_K the
discrete divergence, R_K the leak and N_K ≤ 0 the dissipation of the upwind
fluxes.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from upwind_lab.core import Discretization
from upwind_lab.data_types import CellValues, FaceCoeffs, InvalidParameterError
from upwind_lab.seminorm.kernel import KernelSpec, kernel_matrix
from upwind_lab.seminorm.seminorm import VirtualCoordinates
from upwind_lab.upwind.scheme import UpwindOperator

logger = logging.getLogger(__name__)

KRUZKOV_HEADER = ("t", "A_K", "D_K", "R_K", "N_K", "derivative", "defect")


@dataclass(frozen=True, slots=True)
class KruzkovReport:
    """Terms of the decomposition at one state.

    Attributes:
        transport (float): A_K = 2 ΣΣ (AᵀK − diag(Σ_l a_{l,i}) K)_{i,j} |u_i − u_j| π_j.
        divergence (float): D_K = −2 ΣΣ K_{i,j} S_{i,j} D_i u_j π_i π_j.
        leak (float): R_K = 2 ΣΣ K_{i,j} S_{i,j} R_i π_i π_j.
        dissipation (float): N_K, nonpositive.
        derivative (float): 2 ΣΣ K_{i,j} S_{i,j} (du_i/dt) π_i π_j.
        defect (float): |derivative − (A_K + D_K + 2 N_K + R_K)|.
    """

    transport: float
    divergence: float
    leak: float
    dissipation: float
    derivative: float
    defect: float

    def row(self, t: float) -> tuple[float, ...]:
        """Row of the Kruzkov CSV at time t."""
        return (
            t,
            self.transport,
            self.divergence,
            self.leak,
            self.dissipation,
            self.derivative,
            self.defect,
        )


def kernel_double_sum(
    kernel: NDArray[np.float64], u: CellValues, volumes: NDArray[np.float64]
) -> float:
    """ΣΣ K_{i,j} |u_i − u_j| π_i π_j for a dense kernel matrix."""
    u = np.asarray(u, dtype=float)
    return float(volumes @ (kernel * np.abs(u[:, None] - u[None, :])) @ volumes)


def _kernel(
    mesh: Discretization,
    kernel: NDArray[np.float64] | KernelSpec,
    coords: VirtualCoordinates | None,
) -> NDArray[np.float64]:
    if isinstance(kernel, KernelSpec):
        coords = coords or VirtualCoordinates.barycenters(mesh)
        return kernel_matrix(coords.points, kernel)
    matrix = np.asarray(kernel, dtype=float)
    if matrix.shape != (mesh.n_cells, mesh.n_cells):
        msg = (
            f"Kernel matrix of shape {matrix.shape} "
            f"does not match {mesh.n_cells} cells"
        )
        raise InvalidParameterError(msg)
    if (matrix < 0.0).any():
        msg = "Kernel matrix must be nonnegative"
        raise InvalidParameterError(msg)
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-14 * np.abs(matrix).max()):
        msg = "Kernel matrix must be symmetric"
        raise InvalidParameterError(msg)
    return matrix


def kruzkov_decomposition(  # noqa: PLR0913
    mesh: Discretization,
    coeffs: FaceCoeffs,
    u: CellValues,
    kernel: NDArray[np.float64] | KernelSpec,
    *,
    coords: VirtualCoordinates | None = None,
    interior: NDArray[np.bool_] | None = None,
) -> KruzkovReport:
    """Evaluate A_K, D_K, R_K and N_K at a state of the scheme.

    Args:
        mesh: The mesh.
        coeffs: Coefficients at the time of the state.
        u: Densities, zero outside the active cells.
        kernel: Dense symmetric kernel matrix K_{i,j}, or a kernel evaluated at
            the virtual coordinates.
        coords: Virtual coordinates for a `KernelSpec`; defaults to the barycenters.
        interior: Active cells; defaults to the interior cells of the mesh.

    Returns:
        KruzkovReport: The four terms, the exact derivative and the identity defect.

    Raises:
        InvalidParameterError: If the kernel matrix is negative, asymmetric or
            does not match the mesh.
    """
    matrix = _kernel(mesh, kernel, coords)
    operator = UpwindOperator(mesh, coeffs, interior)
    u = np.where(operator.active, np.asarray(u, dtype=float), 0.0)
    volumes = mesh.volumes
    a = coeffs.matrix()

    rate, leak = operator.apply(u)
    signs = np.sign(u[:, None] - u[None, :])
    increments = np.abs(u[:, None] - u[None, :])
    weighted = matrix * signs

    outflow = np.asarray(a.sum(axis=0)).ravel()
    inflow = np.asarray(a.sum(axis=1)).ravel()
    gain = a @ u
    divergence_cells = (outflow - inflow) / volumes
    pair_volumes = volumes[:, None] * volumes[None, :]

    transport = 2.0 * float(
        np.sum(
            (a.T @ matrix - outflow[:, None] * matrix)
            * increments
            * volumes[None, :]
        )
    )
    divergence = -2.0 * float(
        np.sum(weighted * divergence_cells[:, None] * u[None, :] * pair_volumes)
    )
    leak_term = 2.0 * float(np.sum(weighted * leak[:, None] * pair_volumes))
    spread = a @ increments
    dissipation = -float(np.sum(matrix * spread * volumes[None, :])) - float(
        np.sum(
            weighted
            * (inflow[:, None] * u[None, :] - gain[:, None])
            * volumes[None, :]
        )
    )
    derivative = 2.0 * float(np.sum(weighted * rate[:, None] * pair_volumes))

    total = transport + divergence + 2.0 * dissipation + leak_term
    defect = abs(derivative - total)
    if dissipation > 1e-12 * max(1.0, abs(derivative)):
        logger.warning("Dissipation term N_K = %.3e is positive", dissipation)
    logger.debug(
        "Kruzkov terms: A = %.6g, D = %.6g, R = %.6g, N = %.6g, defect %.2e",
        transport,
        divergence,
        leak_term,
        dissipation,
        defect,
    )
    return KruzkovReport(
        transport, divergence, leak_term, dissipation, derivative, defect
    )
