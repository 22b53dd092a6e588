"""Residue of virtual coordinates against a discretized field."""

import logging
from collections.abc import Sequence

import numpy as np
from numpy.typing import NDArray

from upwind_lab.core import Discretization
from upwind_lab.data_types import CellValues, FaceCoeffs
from upwind_lab.discretize.norms import discrete_norm
from upwind_lab.seminorm.seminorm import VirtualCoordinates

logger = logging.getLogger(__name__)

RESIDUE_EXPONENTS = (1.0, 2.0, float("inf"))


def residue_field(
    mesh: Discretization,
    coeffs: FaceCoeffs,
    b_tilde: CellValues,
    coords: VirtualCoordinates,
) -> CellValues:
    """Compute r_i = (1/π_i) Σ_{i'} (x̃_{i'} − x̃_i) a_{i',i} − b̃_i.

    The sum runs over the neighbors of i; with A[i', i] = a_{i',i} it equals
    (Aᵀ x̃ − c ∘ x̃)_i where c_i = Σ_{i'} a_{i',i} is the outflow of cell i.

    Args:
        mesh: The mesh.
        coeffs: Face coefficients at the time of interest.
        b_tilde: Cell values b̃_i of the field, shape ``(n, d)``.
        coords: Virtual coordinates x̃.

    Returns:
        CellValues: Residue vectors, shape ``(n, d)``.
    """
    a = coeffs.matrix()
    points = coords.points
    outflow = np.asarray(a.sum(axis=0)).ravel()
    moved = np.asarray(a.T @ points) - outflow[:, None] * points
    return moved / mesh.volumes[:, None] - np.asarray(b_tilde, dtype=float)


def residue_norms(
    mesh: Discretization,
    residue: CellValues,
    cells: NDArray[np.bool_] | None = None,
    exponents: Sequence[float] = RESIDUE_EXPONENTS,
) -> dict[str, float]:
    """L^p norms of a residue field over a set of cells.

    Args:
        mesh: The mesh.
        residue: Residue vectors; their Euclidean length is measured.
        cells: Mask of the cells entering the norm; defaults to all cells.
        exponents: Exponents p.

    Returns:
        dict[str, float]: Norms keyed ``"L1"``, ``"L2"``, ``"Linf"``.
    """
    mask = np.ones(mesh.n_cells, dtype=bool) if cells is None else cells
    out = {}
    for p in exponents:
        key = "Linf" if np.isinf(p) else f"L{p:g}"
        out[key] = discrete_norm(residue[mask], p, volumes=mesh.volumes[mask])
    return out
