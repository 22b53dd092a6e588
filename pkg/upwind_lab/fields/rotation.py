import numpy as np
from numpy.typing import NDArray
from pydantic import Field

from upwind_lab.fields.base import FieldModel


class RotationField(FieldModel):
    """Rigid rotation b(x) = ω (−(x₂ − c₂), x₁ − c₁).

    Attributes:
        center (tuple[float, float]): Center of rotation.
        omega (float): Angular velocity.
    """

    center: tuple[float, float] = (0.5, 0.5)
    omega: float = Field(default=1.0)

    def __call__(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the field."""
        del t
        rel = np.atleast_2d(x) - np.asarray(self.center)
        return self.omega * np.column_stack([-rel[:, 1], rel[:, 0]])
