import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.mesh.polygon import PatternTiling, PolygonMesh, rectangle


def build_hexagonal_mesh(
    radius: float, bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
) -> PolygonMesh:
    """Pointy-top regular hexagons of circumradius ``radius`` covering a rectangle."""
    angles = np.pi / 6.0 + np.pi / 3.0 * np.arange(6)
    hexagon = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    width = np.sqrt(3.0) * radius
    x0, y0, x1, y1 = bounds
    tiling = PatternTiling(
        pattern=(hexagon,),
        lattice=np.array([[width, 0.0], [0.5 * width, 1.5 * radius]]),
        origin=np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)]),
        domain=rectangle(bounds),
    )
    return tiling.build()


class HexagonalGenerator(BaseModel):
    """Periodic mesh of regular hexagons.

    Attributes:
        radius (float): Circumradius of the hexagons.
        bounds (tuple[float, float, float, float]): Rectangle ``(x0, y0, x1, y1)``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    radius: float = Field(default=0.05, gt=0.0)
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)

    def build(self) -> PolygonMesh:
        """Build the mesh."""
        return build_hexagonal_mesh(self.radius, self.bounds)
