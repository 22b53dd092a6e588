from typing import ClassVar

import numpy as np
from numpy.typing import NDArray
from pydantic import Field

from upwind_lab.fields.base import FieldModel


class OscillatingField(FieldModel):
    """Direction rocking in time over a steady shear.

    b(t, x) = (1 + amplitude·sin(2π f t))·vector + shear·(sin(2π x₂), 0)

    Attributes:
        vector (tuple[float, float]): Mean drift.
        amplitude (float): Relative amplitude of the oscillation.
        frequency (float): Oscillations per unit time.
        shear (float): Amplitude of the steady shear.
    """

    time_dependent: ClassVar[bool] = True

    vector: tuple[float, float] = (1.0, 0.0)
    amplitude: float = 0.5
    frequency: float = Field(default=4.0, gt=0.0)
    shear: float = 0.25

    def __call__(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the field."""
        x = np.atleast_2d(x)
        scale = 1.0 + self.amplitude * np.sin(2.0 * np.pi * self.frequency * t)
        out = np.tile(scale * np.asarray(self.vector, dtype=float), (len(x), 1))
        out[:, 0] += self.shear * np.sin(2.0 * np.pi * x[:, 1])
        return out
