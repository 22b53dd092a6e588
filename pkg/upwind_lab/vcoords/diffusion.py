"""Discrete diffusion operators: nonpositive off-diagonals, zero row and column sums."""

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, sparse
from scipy.sparse.csgraph import connected_components

from upwind_lab.data_types import DiffusionMatrixError, RangeConditionError

logger = logging.getLogger(__name__)

_SUM_TOL = 1e-10
_RANGE_TOL = 1e-9
_RESIDUAL_TOL = 1e-10
_EXHAUSTIVE_SUBSETS = 12


@dataclass(frozen=True, slots=True)
class DiffusionMatrix:
    """A validated member of M(n).

    Attributes:
        matrix (NDArray[np.float64]): Dense ``(n, n)`` matrix.
        blocks (tuple[NDArray[np.int64], ...]): Irreducible diagonal blocks
            I_1, ..., I_m, ordered by their smallest index.
    """

    matrix: NDArray[np.float64]
    blocks: tuple[NDArray[np.int64], ...]

    @property
    def size(self) -> int:
        """Dimension n."""
        return len(self.matrix)

    @property
    def labels(self) -> NDArray[np.int64]:
        """Block number of every index."""
        out = np.empty(self.size, dtype=np.int64)
        for k, block in enumerate(self.blocks):
            out[block] = k
        return out


def check_diffusion_matrix(
    matrix: NDArray[np.float64], tol: float = _SUM_TOL
) -> NDArray[np.float64]:
    """Check the defining properties of M(n) relative to the largest entry.

    Raises:
        DiffusionMatrixError: If the matrix is not square, has a positive
            off-diagonal entry or a row or column sum away from zero.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:  # noqa: PLR2004
        msg = f"Diffusion matrix must be square, got shape {matrix.shape}"
        raise DiffusionMatrixError(msg)
    scale = max(float(np.abs(matrix).max(initial=0.0)), 1.0)
    off = matrix - np.diag(np.diag(matrix))
    if (off > tol * scale).any():
        i, j = np.unravel_index(int(np.argmax(off)), off.shape)
        msg = f"Off-diagonal entry ({i}, {j}) = {off[i, j]:.3e} is positive"
        raise DiffusionMatrixError(msg)
    rows = np.abs(matrix.sum(axis=1))
    cols = np.abs(matrix.sum(axis=0))
    if rows.max(initial=0.0) > tol * scale:
        i = int(np.argmax(rows))
        msg = f"Row {i} sums to {matrix[i].sum():.3e}"
        raise DiffusionMatrixError(msg)
    if cols.max(initial=0.0) > tol * scale:
        j = int(np.argmax(cols))
        msg = f"Column {j} sums to {matrix[:, j].sum():.3e}"
        raise DiffusionMatrixError(msg)
    return matrix


def block_decompose(
    matrix: NDArray[np.float64], tol: float = _SUM_TOL
) -> DiffusionMatrix:
    """Split a discrete diffusion operator into its irreducible diagonal blocks.

    The blocks are the connected components of the symmetrized support of the
    off-diagonal part; for members of M(n) they coincide with the strongly
    connected components of the support graph.

    Raises:
        DiffusionMatrixError: If the matrix is not in M(n).
    """
    matrix = check_diffusion_matrix(matrix, tol)
    scale = max(float(np.abs(matrix).max(initial=0.0)), 1.0)
    support = np.abs(matrix) > tol * scale
    np.fill_diagonal(support, val=False)
    count, labels = connected_components(
        sparse.csr_matrix(support | support.T), directed=False
    )
    blocks = [np.flatnonzero(labels == k) for k in range(count)]
    blocks.sort(key=lambda b: int(b[0]))
    logger.debug(
        "Diffusion matrix of size %d splits into %d blocks", len(matrix), count
    )
    return DiffusionMatrix(matrix, tuple(blocks))


def solve_bounded(
    operator: DiffusionMatrix | NDArray[np.float64],
    rhs: NDArray[np.float64],
    *,
    tol: float = _RANGE_TOL,
) -> NDArray[np.float64]:
    """Solve M x = φ with zero mean on every block.

    Each irreducible block M(I_k, I_k) has null space and left null space
    spanned by the constants, so the bordered system
    ``[[M_k, 1], [1ᵀ, 0]]`` is nonsingular and yields the zero-mean solution.
    Vector right-hand sides are solved column by column with one factorization.

    Args:
        operator: The operator, or a raw matrix to be decomposed first.
        rhs: Right-hand side φ of shape ``(n,)`` or ``(n, d)``.
        tol: Relative tolerance of the range condition Σ_{i ∈ I_k} φ_i = 0.

    Returns:
        NDArray[np.float64]: The solution, with the shape of ``rhs``.

    Raises:
        DiffusionMatrixError: If the matrix is not in M(n).
        RangeConditionError: If φ sums to a nonzero value on some block.
    """
    if not isinstance(operator, DiffusionMatrix):
        operator = block_decompose(operator)
    rhs = np.asarray(rhs, dtype=float)
    columns = rhs.reshape(operator.size, -1)
    scale = max(float(np.abs(columns).max(initial=0.0)), 1e-300)
    solution = np.zeros_like(columns)
    for k, block in enumerate(operator.blocks):
        local = columns[block]
        total = local.sum(axis=0)
        if np.abs(total).max() > tol * max(scale * len(block), 1.0):
            raise RangeConditionError(k, total)
        if len(block) == 1:
            continue
        size = len(block)
        bordered = np.zeros((size + 1, size + 1))
        bordered[:size, :size] = operator.matrix[np.ix_(block, block)]
        bordered[:size, size] = 1.0
        bordered[size, :size] = 1.0
        factor = linalg.lu_factor(bordered)
        extended = np.vstack([local - total / size, np.zeros((1, local.shape[1]))])
        solution[block] = linalg.lu_solve(factor, extended)[:size]

    residual = np.abs(operator.matrix @ solution - columns).max(initial=0.0)
    if residual > _RESIDUAL_TOL * max(scale, 1.0):
        logger.warning("Diffusion solve residual %.3e exceeds tolerance", residual)
    else:
        logger.debug("Diffusion solve residual %.3e", residual)
    return solution.reshape(rhs.shape)


def maximum_principle_shape(size: int, lower: float, upper: float) -> float:
    """Shape upper^{n−2} lower^{−(n−1)} of the bound ‖x‖_∞ ≤ C₂(n)·shape·‖φ‖_∞.

    Valid for operators whose nonzero off-diagonal entries have magnitudes in
    (lower, upper).
    """
    return upper ** (size - 2) * lower ** (-(size - 1))


def inhomogeneity_constant(
    matrix: NDArray[np.float64],
    rhs: NDArray[np.float64],
    *,
    samples: int = 50,
    seed: int = 0,
) -> float:
    """Smallest C₀ with |Σ_{I'} φ| ≤ C₀ Σ_{j ∈ I', i ∉ I'} (|M_ij| + |M_ji|).

    All proper nonempty subsets are checked when n is small, otherwise
    ``samples`` random subsets. Subsets with no coupling to their complement
    and a nonzero sum give ``inf``.
    """
    matrix = np.asarray(matrix, dtype=float)
    rhs = np.asarray(rhs, dtype=float).reshape(len(matrix), -1)
    n = len(matrix)
    coupling = np.abs(matrix) + np.abs(matrix.T)
    if n <= _EXHAUSTIVE_SUBSETS:
        subsets = [
            np.array(s) for r in range(1, n) for s in combinations(range(n), r)
        ]
    else:
        rng = np.random.default_rng(seed)
        subsets = []
        for _ in range(samples):
            mask = rng.random(n) < 0.5  # noqa: PLR2004
            if 0 < mask.sum() < n:
                subsets.append(np.flatnonzero(mask))
    worst = 0.0
    for subset in subsets:
        outside = np.setdiff1d(np.arange(n), subset)
        total = float(np.linalg.norm(rhs[subset].sum(axis=0)))
        boundary = float(coupling[np.ix_(subset, outside)].sum())
        if boundary == 0.0:
            if total > _RANGE_TOL * max(float(np.abs(rhs).max(initial=0.0)), 1.0):
                return float("inf")
            continue
        worst = max(worst, total / boundary)
    return worst
