"""Discrete Gagliardo-type W^{s,p} double sums."""

import logging

import numpy as np
from scipy.spatial import cKDTree

from upwind_lab.core import Discretization
from upwind_lab.data_types import CellValues, InvalidParameterError

logger = logging.getLogger(__name__)

INTERACTION_CUTOFF = 1.0


def fractional_sobolev(
    mesh: Discretization, u: CellValues, s: float, p: float = 1.0
) -> float:
    """Σ_{i≠j, |x_i − x_j| ≤ 1} |u_i − u_j|^p π_i π_j / |x_i − x_j|^{d + sp}.

    The sum runs over ordered pairs of distinct barycenters.

    Raises:
        InvalidParameterError: If s is not in (0, 1) or p < 1.
    """
    if not 0.0 < s < 1.0:
        msg = f"Smoothness s must lie in (0, 1), got {s}"
        raise InvalidParameterError(msg)
    if p < 1.0:
        msg = f"Exponent must be at least 1, got {p}"
        raise InvalidParameterError(msg)
    points = np.asarray(mesh.barycenters, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    u = np.asarray(u, dtype=float)
    pairs = cKDTree(points).query_pairs(INTERACTION_CUTOFF, output_type="ndarray")
    if not len(pairs):
        return 0.0
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    i, j = pairs[:, 0], pairs[:, 1]
    distances = np.linalg.norm(points[i] - points[j], axis=1)
    keep = distances > 0.0
    if not keep.all():
        logger.warning(
            "Skipping %d pairs of coinciding barycenters", int((~keep).sum())
        )
    i, j, distances = i[keep], j[keep], distances[keep]
    dim = points.shape[1]
    terms = (
        np.abs(u[i] - u[j]) ** p
        * mesh.volumes[i]
        * mesh.volumes[j]
        / distances ** (dim + s * p)
    )
    value = 2.0 * float(terms.sum())
    logger.debug("W^{%.3g,%.3g} double sum over %d pairs: %.6g", s, p, len(i), value)
    return value
