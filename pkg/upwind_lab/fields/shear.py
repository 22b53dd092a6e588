import numpy as np
from numpy.typing import NDArray
from pydantic import Field

from upwind_lab.fields.base import FieldModel


class ShearField(FieldModel):
    """Smooth shear flow b(x) = (offset + amplitude·sin(2π k x₂), 0).

    Attributes:
        amplitude (float): Amplitude of the shear.
        wavenumber (float): Number k of periods over a unit length.
        offset (float): Uniform horizontal drift.
    """

    amplitude: float = 1.0
    wavenumber: float = Field(default=1.0, gt=0.0)
    offset: float = 0.0

    def __call__(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the field."""
        del t
        x = np.atleast_2d(x)
        phase = 2.0 * np.pi * self.wavenumber * x[:, 1]
        flow = self.offset + self.amplitude * np.sin(phase)
        return np.column_stack([flow, np.zeros(len(x))])
