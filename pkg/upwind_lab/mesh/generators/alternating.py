import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.data_types import InvalidParameterError
from upwind_lab.mesh.polygon import PatternTiling, PolygonMesh, rectangle

logger = logging.getLogger(__name__)

_DIVISIBILITY_TOL = 1e-9


def _multiple(length: float, step: float) -> bool:
    ratio = length / step
    return abs(ratio - round(ratio)) <= _DIVISIBILITY_TOL * max(ratio, 1.0)


def alternating_tiling(
    h: float, bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
) -> PatternTiling:
    """Pattern of one coarse cell above two fine cells, repeated along (h, 0), (0, 2h).

    Coarse cells carry the midpoints of their horizontal edges as vertices, so that
    they share full faces with the fine cells above and below.
    """
    half = 0.5 * h
    coarse = np.array(
        [[0.0, 0.0], [half, 0.0], [h, 0.0], [h, h], [half, h], [0.0, h]]
    )
    fine_left = np.array([[0.0, h], [half, h], [half, 2 * h], [0.0, 2 * h]])
    fine_right = fine_left + np.array([half, 0.0])
    x0, y0, _, _ = bounds
    return PatternTiling(
        pattern=(coarse, fine_left, fine_right),
        lattice=np.array([[h, 0.0], [0.0, 2.0 * h]]),
        origin=np.array([x0, y0]),
        domain=rectangle(bounds),
    )


def build_alternating_mesh(
    h: float, bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
) -> PolygonMesh:
    """Rows of horizontal size h alternating with rows of size h/2.

    Row k covers [kh, (k+1)h); even rows are coarse, odd rows are fine.

    Args:
        h: Vertical size of every row and horizontal size of the coarse cells.
        bounds: Rectangle ``(x0, y0, x1, y1)``.

    Returns:
        PolygonMesh: The mesh with its generating tiling.

    Raises:
        InvalidParameterError: If h does not divide the sides of the rectangle.
    """
    x0, y0, x1, y1 = bounds
    if h <= 0.0:
        msg = f"Row height must be positive, got {h}"
        raise InvalidParameterError(msg)
    if not (_multiple(x1 - x0, h) and _multiple(y1 - y0, h)):
        msg = f"h = {h} does not divide the sides of {bounds}"
        raise InvalidParameterError(msg)
    mesh = alternating_tiling(h, bounds).build()
    logger.debug("Alternating mesh with h = %.6g: %d cells", h, mesh.n_cells)
    return mesh


class AlternatingGenerator(BaseModel):
    """Rows of size h alternating with rows of size h/2 (two horizontal resolutions).

    Attributes:
        h (float): Row height and coarse cell width.
        bounds (tuple[float, float, float, float]): Rectangle ``(x0, y0, x1, y1)``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    h: float = Field(default=0.125, gt=0.0)
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)

    def build(self) -> PolygonMesh:
        """Build the mesh."""
        return build_alternating_mesh(self.h, self.bounds)
