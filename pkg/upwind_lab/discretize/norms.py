import logging
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from upwind_lab.data_types import FaceCoeffs, InvalidParameterError

logger = logging.getLogger(__name__)


def discrete_norm(
    values: NDArray[np.float64] | FaceCoeffs,
    p: float,
    kind: Literal["cell", "face"] = "cell",
    *,
    volumes: NDArray[np.float64] | None = None,
    dx: float | None = None,
    dim: int = 2,
) -> float:
    """Discrete L^p norm of cell values or face coefficients.

    Cell norm: (Σ |v_i|^p π_i)^{1/p}. Face norm: (Σ |a_{i,j}|^p)^{1/p} δx^{d/p − (d−1)},
    summed over both orientations of every face. For p = ∞ the exact maximum of
    the stored values is used; the face scaling is then δx^{−(d−1)}.

    Args:
        values: Cell values (vector values use their Euclidean length) or face
            coefficients.
        p: Exponent in [1, ∞].
        kind: Which of the two norms.
        volumes: Cell volumes π_i, required for the cell norm with finite p.
        dx: Discretization size, required for the face norm.
        dim: Space dimension.

    Returns:
        float: The norm.

    Raises:
        InvalidParameterError: If p < 1 or a required argument is missing.
    """
    if not p >= 1.0:
        msg = f"Norm exponent must be at least 1, got {p}"
        raise InvalidParameterError(msg)

    if isinstance(values, FaceCoeffs):
        values = np.concatenate([values.forward, values.backward])
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:  # noqa: PLR2004
        magnitude = np.linalg.norm(values, axis=1)
    else:
        magnitude = np.abs(values)

    if kind == "cell":
        if np.isinf(p):
            return float(magnitude.max(initial=0.0))
        if volumes is None:
            msg = "The cell norm needs the cell volumes"
            raise InvalidParameterError(msg)
        return float((magnitude**p @ volumes) ** (1.0 / p))

    if dx is None:
        msg = "The face norm needs the discretization size"
        raise InvalidParameterError(msg)
    scale = dx ** (dim / p - (dim - 1))
    if np.isinf(p):
        return float(magnitude.max(initial=0.0) * scale)
    return float((magnitude**p).sum() ** (1.0 / p) * scale)
