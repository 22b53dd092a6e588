"""Discrete log-scale semi-norms with virtual coordinates."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from upwind_lab.core import Discretization
from upwind_lab.data_types import CellValues, InvalidParameterError, SemiNormParams
from upwind_lab.seminorm.kernel import KERNEL_SUPPORT, KernelSpec

logger = logging.getLogger(__name__)

MAX_COORDINATE_DRIFT = 1.0 / 16.0


@dataclass(frozen=True, slots=True)
class VirtualCoordinates:
    """Per-cell points x̃_i replacing the barycenters in the discrete kernel.

    Attributes:
        points (NDArray[np.float64]): Coordinates, shape ``(n, d)``.
    """

    points: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Check shape and finiteness."""
        if self.points.ndim != 2:  # noqa: PLR2004
            msg = f"Virtual coordinates must have shape (n, d), got {self.points.shape}"
            raise InvalidParameterError(msg)
        if not np.isfinite(self.points).all():
            msg = "Virtual coordinates must be finite"
            raise InvalidParameterError(msg)

    @classmethod
    def barycenters(cls, mesh: Discretization) -> "VirtualCoordinates":
        """Coordinates equal to the cell barycenters."""
        return cls(np.asarray(mesh.barycenters, dtype=float))

    def drift(self, mesh: Discretization) -> float:
        """max_i |x̃_i − x_i|."""
        return float(
            np.linalg.norm(self.points - mesh.barycenters, axis=1).max(initial=0.0)
        )


def kernel_pairs(
    points: NDArray[np.float64], radius: float = KERNEL_SUPPORT
) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Unordered pairs i < j with |x̃_i − x̃_j| < radius and their distances.

    Pairs are found with a k-d tree and returned in lexicographic order, which
    fixes the summation order.
    """
    tree = cKDTree(points)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if not len(pairs):
        return np.empty((0, 2), dtype=np.int64), np.empty(0)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    distances = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
    keep = distances < radius
    return pairs[keep].astype(np.int64), distances[keep]


@dataclass(frozen=True, slots=True)
class SemiNormResult:
    """A discrete semi-norm and the scan over kernel widths it was taken from.

    Attributes:
        value (float): sup_h |log h|^{−θ} ΣΣ K̃^h_{i,j} |u_i − u_j|^p π_i π_j.
        h_max (float): Width attaining the supremum.
        h_values (NDArray[np.float64]): The h-grid.
        raw (NDArray[np.float64]): Double sums per h.
        weighted (NDArray[np.float64]): Weighted double sums per h.
        negative_log_exponent (bool): Whether θ < 0 was used.
    """

    value: float
    h_max: float
    h_values: NDArray[np.float64]
    raw: NDArray[np.float64]
    weighted: NDArray[np.float64]
    negative_log_exponent: bool = False

    def norm(self, p: float) -> float:
        """The semi-norm itself, value^{1/p}."""
        return float(self.value ** (1.0 / p))

    def rows(self) -> list[tuple[float, float, float]]:
        """Rows ``(h, raw_double_sum, weighted_value)``."""
        return [
            (float(h), float(r), float(w))
            for h, r, w in zip(self.h_values, self.raw, self.weighted, strict=True)
        ]


def kernel_double_sums(
    u: CellValues,
    volumes: NDArray[np.float64],
    points: NDArray[np.float64],
    h_values: Sequence[float] | NDArray[np.float64],
    p: float = 1.0,
) -> NDArray[np.float64]:
    """ΣΣ_{i,j} K^h(x̃_i − x̃_j) |u_i − u_j|^p π_i π_j for every h of the grid."""
    pairs, distances = kernel_pairs(points)
    i, j = pairs[:, 0], pairs[:, 1]
    increments = np.abs(u[i] - u[j]) ** p * volumes[i] * volumes[j]
    active = increments > 0.0
    increments, distances = increments[active], distances[active]
    dim = points.shape[1]
    sums = [
        2.0 * float(KernelSpec(float(h), dim).radial(distances) @ increments)
        for h in h_values
    ]
    return np.array(sums)


def discrete_seminorm(
    mesh: Discretization,
    u: CellValues,
    params: SemiNormParams,
    coords: VirtualCoordinates | None = None,
) -> SemiNormResult:
    """Compute ‖u‖^p_{h₀,p,θ;x̃} over the h-grid of ``params``.

    Args:
        mesh: The mesh providing the volumes π_i.
        u: Densities.
        params: Semi-norm parameters; θ may be negative for the divergence semi-norm.
        coords: Virtual coordinates; defaults to the barycenters.

    Returns:
        SemiNormResult: The supremum, its maximizer and the full scan.

    Raises:
        InvalidParameterError: If the h-grid is empty or the coordinates do not
            match the mesh.
    """
    h_values = params.h_grid()
    if not len(h_values):
        msg = "The h-grid of the semi-norm is empty"
        raise InvalidParameterError(msg)
    coords = coords or VirtualCoordinates.barycenters(mesh)
    if len(coords.points) != mesh.n_cells:
        msg = f"{len(coords.points)} virtual coordinates for {mesh.n_cells} cells"
        raise InvalidParameterError(msg)

    raw = kernel_double_sums(
        np.asarray(u, dtype=float), mesh.volumes, coords.points, h_values, params.p
    )
    weighted = np.abs(np.log(h_values)) ** (-params.theta) * raw
    best = int(np.argmax(weighted))
    negative = params.theta < 0.0
    if negative:
        logger.warning(
            "Semi-norm evaluated with negative log exponent %.3g", params.theta
        )
    logger.debug(
        "Semi-norm %.6g attained at h = %.4g over %d widths",
        weighted[best],
        h_values[best],
        len(h_values),
    )
    return SemiNormResult(
        value=float(weighted[best]),
        h_max=float(h_values[best]),
        h_values=h_values,
        raw=raw,
        weighted=weighted,
        negative_log_exponent=negative,
    )


@dataclass(frozen=True, slots=True)
class EquivalenceResult:
    """Comparison of the semi-norms of one density under two coordinate sets.

    Attributes:
        ratio (float): Semi-norm with the first over the second coordinates.
        drift (float): h₂, the largest distance of either set to the barycenters.
        h0 (float): Smallest kernel width h₀.
        constant (float): Implied C in max(ratio, 1/ratio) = 1 + C h₂/h₀.
    """

    ratio: float
    drift: float
    h0: float
    constant: float

    def within(self, constant: float) -> bool:
        """Whether the ratio satisfies the bound 1 + C h₂/h₀ for the given C."""
        bound = 1.0 + constant * self.drift / self.h0
        return 1.0 / bound <= self.ratio <= bound


def coordinate_equivalence_ratio(
    mesh: Discretization,
    u: CellValues,
    params: SemiNormParams,
    first: VirtualCoordinates,
    second: VirtualCoordinates,
) -> EquivalenceResult:
    """Ratio of the semi-norms of u computed with two sets of virtual coordinates.

    Raises:
        InvalidParameterError: If a coordinate set drifts 1/16 or more from the
            barycenters.
    """
    drift = max(first.drift(mesh), second.drift(mesh))
    if drift >= MAX_COORDINATE_DRIFT:
        msg = f"Coordinate drift {drift:.4g} is not below {MAX_COORDINATE_DRIFT}"
        raise InvalidParameterError(msg)
    top = discrete_seminorm(mesh, u, params, first).value
    bottom = discrete_seminorm(mesh, u, params, second).value
    if bottom == 0.0:
        ratio = 1.0 if top == 0.0 else np.inf
    else:
        ratio = top / bottom
    spread = max(ratio, 1.0 / ratio) if ratio > 0.0 else np.inf
    constant = 0.0 if drift == 0.0 else (spread - 1.0) * params.h0 / drift
    return EquivalenceResult(float(ratio), drift, params.h0, float(constant))


def fit_equivalence_constant(results: Sequence[EquivalenceResult]) -> float:
    """Smallest C for which every result satisfies the ratio bound."""
    return float(max((r.constant for r in results), default=0.0))
