import numpy as np
from numpy.typing import NDArray

from upwind_lab.fields.base import FieldModel


class ConstantField(FieldModel):
    """b ≡ vector.

    Attributes:
        vector (tuple[float, float]): The constant value.
    """

    vector: tuple[float, float] = (1.0, 0.0)

    def __call__(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the field."""
        del t
        return np.tile(np.asarray(self.vector, dtype=float), (len(np.atleast_2d(x)), 1))
