from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from upwind_lab.mesh.polygon import PatternTiling, PolygonMesh, rectangle


def build_cartesian_mesh(
    nx: int, ny: int, bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
) -> PolygonMesh:
    """Uniform grid of ``nx`` by ``ny`` rectangles built from a one-cell pattern."""
    x0, y0, x1, y1 = bounds
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    tiling = PatternTiling(
        pattern=(np.array([[0.0, 0.0], [hx, 0.0], [hx, hy], [0.0, hy]]),),
        lattice=np.array([[hx, 0.0], [0.0, hy]]),
        origin=np.array([x0, y0]),
        domain=rectangle(bounds),
    )
    return tiling.build()


class CartesianGenerator(BaseModel):
    """Cartesian grid on a rectangle.

    Attributes:
        nx (int): Cells along x.
        ny (int): Cells along y.
        bounds (tuple[float, float, float, float]): Rectangle ``(x0, y0, x1, y1)``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    nx: int = Field(default=16, ge=1)
    ny: int = Field(default=16, ge=1)
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)

    @model_validator(mode="after")
    def _check_bounds(self) -> Self:
        x0, y0, x1, y1 = self.bounds
        if x1 <= x0 or y1 <= y0:
            msg = f"Empty rectangle {self.bounds}"
            raise ValueError(msg)
        return self

    def build(self) -> PolygonMesh:
        """Build the grid."""
        return build_cartesian_mesh(self.nx, self.ny, self.bounds)
