import numpy as np
from numpy.typing import NDArray
from pydantic import Field

from upwind_lab.fields.base import FieldModel


class RoughField(FieldModel):
    """Random shear sample b(x) = (offset + Σ_k c_k |x₂ − y_k|^α, 0) in W^{1,q}.

    The kinks |x₂ − y_k|^α have gradients in L^q exactly for α > 1 − 1/q;
    α = 1 − 1/(2q) is used, so the field lies in W^{1,q} but in no W^{1,2q}.

    Attributes:
        q (float): Declared Sobolev exponent, at least 1.
        kinks (int): Number of kinks.
        amplitude (float): Scale of the kink coefficients.
        offset (float): Uniform horizontal drift.
        seed (int): Seed of the kink positions and coefficients.
    """

    q: float = Field(default=2.0, ge=1.0)
    kinks: int = Field(default=4, ge=1)
    amplitude: float = 0.5
    offset: float = 1.0
    seed: int = 0

    @property
    def sobolev_exponent(self) -> float:
        """The declared exponent q."""
        return self.q

    @property
    def exponent(self) -> float:
        """Hölder exponent α of the kinks."""
        return 1.0 - 1.0 / (2.0 * self.q)

    def _sample(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        rng = np.random.default_rng(self.seed)
        positions = rng.uniform(0.1, 0.9, self.kinks)
        weights = self.amplitude * rng.uniform(-1.0, 1.0, self.kinks)
        return positions, weights

    def __call__(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the field."""
        del t
        x = np.atleast_2d(x)
        positions, weights = self._sample()
        distance = np.abs(x[:, 1, None] - positions[None, :])
        flow = self.offset + (weights[None, :] * distance**self.exponent).sum(axis=1)
        return np.column_stack([flow, np.zeros(len(x))])
