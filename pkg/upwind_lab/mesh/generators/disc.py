from pydantic import BaseModel, ConfigDict, Field

from upwind_lab.mesh.hat import HatMesh, hat_mesh_from_triangulation
from upwind_lab.mesh.triangulation import disc_triangulation


class DiscGenerator(BaseModel):
    """Delaunay triangulation of a disc carrying P1 hat cell functions.

    Attributes:
        resolution (float): Target edge length.
        radius (float): Disc radius.
        center (tuple[float, float]): Disc center.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    resolution: float = Field(default=0.1, gt=0.0)
    radius: float = Field(default=1.0, gt=0.0)
    center: tuple[float, float] = (0.0, 0.0)

    def build(self) -> HatMesh:
        """Build the hat mesh."""
        return hat_mesh_from_triangulation(
            disc_triangulation(self.resolution, self.radius, self.center)
        )
