from typing import ClassVar

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from upwind_lab.discretize.projections import SpatialField


class FieldModel(BaseModel):
    """Base class of the catalog velocity fields.

    Attributes:
        time_dependent (bool): Whether the field varies in time.
        sobolev (str): Declared regularity.
        sobolev_exponent (float): Exponent q of the declared W^{1,q} regularity.
        time_regularity (float): Hölder exponent s of the field in time.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    time_dependent: ClassVar[bool] = False
    time_regularity: ClassVar[float] = 1.0

    @property
    def sobolev_exponent(self) -> float:
        """Exponent q of the declared W^{1,q} regularity."""
        return float("inf")

    @property
    def sobolev(self) -> str:
        """Declared regularity, for example ``"W^{1,inf}"``."""
        q = self.sobolev_exponent
        return "W^{1,inf}" if np.isinf(q) else f"W^{{1,{q:g}}}"

    def __call__(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the field at points of shape ``(m, 2)``."""
        raise NotImplementedError

    def divergence(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate div b; the catalog fields are divergence free unless overridden."""
        del t
        return np.zeros(len(np.atleast_2d(x)))

    def at(self, t: float) -> SpatialField:
        """b(t, ·) as a function of space."""
        return lambda x: self(t, np.atleast_2d(x))
