"""Independent reference solutions used by the tests."""

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from upwind_lab.data_types import FaceCoeffs


def cycle_matrix(
    rng: np.random.Generator, n: int, cycles: int, *, spanning: bool = True
) -> NDArray[np.float64]:
    """Random member of M(n) built as a sum of weighted cycles.

    Every cycle i_1 → ... → i_k → i_1 adds w on the diagonal of its nodes and
    −w from each node to its successor, which keeps row and column sums at zero.

    Args:
        rng: Random generator.
        n: Dimension.
        cycles: Number of random cycles.
        spanning: Whether to add one cycle through all indices, making the
            matrix irreducible.

    Returns:
        NDArray[np.float64]: The matrix.
    """
    matrix = np.zeros((n, n))
    paths = [rng.permutation(n)] if spanning else []
    for _ in range(cycles):
        length = int(rng.integers(2, n + 1))
        paths.append(rng.choice(n, size=length, replace=False))
    for path in paths:
        weight = float(rng.uniform(0.5, 2.0))
        for a, b in zip(path, np.roll(path, -1), strict=True):
            matrix[a, a] += weight
            matrix[b, a] -= weight
    return matrix


def generator_matrix(
    coeffs: FaceCoeffs, volumes: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Dense L with du/dt = L u for the upwind scheme without frozen cells."""
    a = coeffs.matrix().toarray()
    return (a - np.diag(a.sum(axis=0))) / volumes[:, None]


def exact_solution(
    coeffs: FaceCoeffs,
    volumes: NDArray[np.float64],
    u0: NDArray[np.float64],
    t: float,
    active: NDArray[np.bool_] | None = None,
) -> NDArray[np.float64]:
    """exp(tL) u0, restricted to the active cells when some cells are frozen."""
    full = generator_matrix(coeffs, volumes)
    if active is None:
        return linalg.expm(t * full) @ u0
    out = np.zeros_like(u0)
    block = full[np.ix_(active, active)]
    out[active] = linalg.expm(t * block) @ u0[active]
    return out
