"""Space and time averages of a velocity field on a partition of Ω.

Time is cut into m slabs of length τ and Ω into boxes Ω_k of side η. Every cell
whose support meets Ω is assigned to one part V_k, the partition functions are
ψ_k = Σ_{i ∈ V_k} χ_i, and the averaged field

    b̄(t, x) = Σ_k ψ_k(x) b̄^{l,k},  t ∈ [t_l, t_{l+1}),

uses the ψ_k-weighted means b̄^{l,k} of b over each slab.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from upwind_lab.core import Discretization, VectorField
from upwind_lab.data_types import CellValues, InvalidParameterError, QuadratureSpec
from upwind_lab.discretize.projections import SpatialField, project_to_cell
from upwind_lab.discretize.quadrature import gauss_interval
from upwind_lab.mesh.periodic import support_shapes
from upwind_lab.seminorm.seminorm import VirtualCoordinates
from upwind_lab.settings import get_settings
from upwind_lab.vcoords.admissible import AdmissibleFamily

logger = logging.getLogger(__name__)

MIN_BOX_CELLS = 8.0

_SLAB_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class PartitionParameters:
    """Box size and slab length of the averaging.

    Attributes:
        eta (float): Box side η after clamping.
        tau (float): Slab length τ after clamping; divides the horizon.
        eta_raw (float): η = δx^{a/(1+a)} with a = 1/p − 1/q.
        tau_raw (float): τ = (δx M_β / M_γ)^{1/(1+s)}.
        clamped (tuple[str, ...]): Description of every clamp applied.
    """

    eta: float
    tau: float
    eta_raw: float
    tau_raw: float
    clamped: tuple[str, ...] = ()


def partition_parameters(  # noqa: PLR0913
    dx: float,
    s: float,
    p: float,
    q: float,
    drift_absolute: float,
    drift_relative: float,
    *,
    horizon: float = 1.0,
    eta_max: float = 1.0,
) -> PartitionParameters:
    """Choose η and τ from the mesh size, the field regularity and the family drifts.

    η is raised to at least 8δx; τ is kept in [δx, T] and shortened so that it
    divides the horizon T. Every clamp is logged.

    Args:
        dx: Discretization size δx.
        s: Time regularity of the field, in (0, 1].
        p: Integrability exponent of the data, at least 1.
        q: Integrability exponent of ∇b, with p < q ≤ ∞.
        drift_absolute: M_β of the admissible family.
        drift_relative: M_γ of the admissible family.
        horizon: Final time T.
        eta_max: Largest admissible box side.

    Returns:
        PartitionParameters: The clamped values with the raw ones.

    Raises:
        InvalidParameterError: If an exponent is out of range or no box side
            in [8δx, eta_max] exists.
    """
    if not 1.0 <= p < q:
        msg = f"Exponents must satisfy 1 <= p < q, got p = {p}, q = {q}"
        raise InvalidParameterError(msg)
    if not 0.0 < s <= 1.0:
        msg = f"Time regularity s must lie in (0, 1], got {s}"
        raise InvalidParameterError(msg)
    if dx <= 0.0 or horizon <= 0.0:
        msg = f"Mesh size and horizon must be positive, got {dx} and {horizon}"
        raise InvalidParameterError(msg)
    if MIN_BOX_CELLS * dx > eta_max:
        msg = (
            f"No box side in [{MIN_BOX_CELLS * dx:.4g}, {eta_max:.4g}] "
            f"fits dx = {dx:.4g}"
        )
        raise InvalidParameterError(msg)

    gap = 1.0 / p - 1.0 / q
    eta_raw = dx ** (gap / (1.0 + gap))
    ratio = drift_absolute / drift_relative if drift_relative > 0.0 else math.inf
    tau_raw = (dx * ratio) ** (1.0 / (1.0 + s))

    clamped: list[str] = []
    eta = eta_raw
    if eta < MIN_BOX_CELLS * dx:
        eta = MIN_BOX_CELLS * dx
        clamped.append(f"eta raised from {eta_raw:.4g} to {eta:.4g}")
    elif eta > eta_max:
        eta = eta_max
        clamped.append(f"eta lowered from {eta_raw:.4g} to {eta:.4g}")
    tau = min(max(tau_raw, dx), horizon)
    if tau != tau_raw:
        clamped.append(f"tau moved from {tau_raw:.4g} into [{dx:.4g}, {horizon:.4g}]")
    slabs = math.ceil(horizon / tau - _SLAB_TOL)
    if not math.isclose(slabs * tau, horizon, rel_tol=_SLAB_TOL):
        clamped.append(f"tau shortened from {tau:.4g} to divide T = {horizon:.4g}")
    tau = horizon / slabs
    for note in clamped:
        logger.info("Partition parameters: %s", note)
    return PartitionParameters(eta, tau, eta_raw, tau_raw, tuple(clamped))


@dataclass(frozen=True, slots=True)
class AveragedField:
    """The averaged field b̄ on a space and time partition.

    Attributes:
        times (NDArray[np.float64]): Slab ends t_0 < ... < t_m.
        eta (float): Box side η.
        boxes (NDArray[np.float64]): Bounds ``(x0, y0, x1, y1)`` of the boxes Ω_k
            meeting Ω.
        labels (NDArray[np.int64]): Part k of every cell, -1 if its support
            misses Ω.
        masses (NDArray[np.float64]): ‖ψ_k‖_{L¹(Ω)}.
        averages (NDArray[np.float64]): b̄^{l,k}, shape ``(m, |J|, d)``.
        boundary (NDArray[np.bool_]): Cells of ∂V_k, the parts of V_k next to a
            cell on which ψ_k is not identically 1.
        mesh (Discretization): The mesh of the cell functions.
    """

    times: NDArray[np.float64]
    eta: float
    boxes: NDArray[np.float64]
    labels: NDArray[np.int64]
    masses: NDArray[np.float64]
    averages: NDArray[np.float64]
    boundary: NDArray[np.bool_]
    mesh: Discretization = field(repr=False, compare=False)

    time_dependent = True
    sobolev = "piecewise constant in t"

    @property
    def tau(self) -> float:
        """Slab length τ."""
        return float(self.times[1] - self.times[0])

    def slab(self, t: float) -> int:
        """Index l of the slab [t_l, t_{l+1}) containing t; the last slab is closed."""
        count = len(self.times) - 1
        return min(max(int((t - self.times[0]) // self.tau), 0), count - 1)

    def piece_values(self, t: float) -> CellValues:
        """b̄^{l,k} of the part of every cell; zero for unassigned cells."""
        averages = self.averages[self.slab(t)]
        values = np.zeros((len(self.labels), averages.shape[1]))
        assigned = self.labels >= 0
        values[assigned] = averages[self.labels[assigned]]
        return values

    def psi(self, k: int, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate ψ_k."""
        weights = (self.labels == k).astype(float)
        return _partition_sum(self.mesh, np.atleast_2d(points), weights[:, None])[:, 0]

    def at(self, t: float) -> SpatialField:
        """b̄(t, ·) as a function of space."""
        values = self.piece_values(t)
        return lambda x: _partition_sum(self.mesh, np.atleast_2d(x), values)

    def __call__(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate b̄(t, x)."""
        return self.at(t)(x)

    def cell_values(self, t: float, spec: QuadratureSpec | None = None) -> CellValues:
        """P_C b̄(t) on the interior cells."""
        return project_to_cell(self.mesh, self.at(t), spec)

    def virtual_coordinates(
        self,
        t: float,
        family: AdmissibleFamily,
        spec: QuadratureSpec | None = None,
    ) -> VirtualCoordinates:
        """x̃_i(t) = x̂_i(b̄_i(t)) with b̄_i = P_C b̄(t)."""
        return family.coordinates_for(self.cell_values(t, spec))

    def part_interior(self, k: int) -> NDArray[np.int64]:
        """Cells of V_k outside ∂V_k, on which P_C b̄ equals b̄^{l,k}."""
        return np.flatnonzero((self.labels == k) & ~self.boundary)


def _partition_sum(
    mesh: Discretization, points: NDArray[np.float64], values: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Σ_i χ_i(x) v_i, visiting only points within a support diameter of each cell."""
    out = np.zeros((len(points), values.shape[1]))
    if not len(points):
        return out
    tree = cKDTree(points)
    barycenters = np.asarray(mesh.barycenters, dtype=float)
    reach = mesh.support_diameters
    for i in np.flatnonzero(np.abs(values).sum(axis=1) > 0.0).tolist():
        near = tree.query_ball_point(barycenters[i], reach[i])
        if near:
            out[near] += mesh.chi(i, points[near])[:, None] * values[i]
    return out


def _boxes(domain: shapely.Polygon, eta: float) -> NDArray[np.float64]:
    x0, y0, x1, y1 = domain.bounds
    nx = max(math.ceil((x1 - x0) / eta - _SLAB_TOL), 1)
    ny = max(math.ceil((y1 - y0) / eta - _SLAB_TOL), 1)
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    lows = np.column_stack([x0 + eta * ix.ravel(), y0 + eta * iy.ravel()])
    bounds = np.column_stack([lows, lows + eta])
    areas = shapely.area(shapely.intersection(shapely.box(*bounds.T), domain))
    return bounds[areas > 0.0]


def _assign(mesh: Discretization, boxes: NDArray[np.float64]) -> NDArray[np.int64]:
    cells = np.arange(mesh.n_cells)
    shapes = support_shapes(mesh, cells)
    if shapes:
        meets = shapely.area(
            shapely.intersection(np.asarray(shapes, dtype=object), mesh.domain)
        ) > 0.0
    else:
        meets = shapely.intersects(shapely.points(mesh.barycenters), mesh.domain)
    centers = 0.5 * (boxes[:, :2] + boxes[:, 2:])
    barycenters = np.asarray(mesh.barycenters, dtype=float)
    inside = (
        (barycenters[:, None, :] >= boxes[None, :, :2])
        & (barycenters[:, None, :] < boxes[None, :, 2:])
    ).all(axis=2)
    nearest = np.argmin(
        np.linalg.norm(barycenters[:, None, :] - centers[None, :, :], axis=2), axis=1
    )
    labels = np.where(inside.any(axis=1), np.argmax(inside, axis=1), nearest)
    return np.where(meets, labels, -1).astype(np.int64)


def _boundary_cells(
    mesh: Discretization, labels: NDArray[np.int64]
) -> NDArray[np.bool_]:
    p, q = mesh.faces[:, 0], mesh.faces[:, 1]
    low, high = labels.copy(), labels.copy()
    np.minimum.at(low, p, labels[q])
    np.minimum.at(low, q, labels[p])
    np.maximum.at(high, p, labels[q])
    np.maximum.at(high, q, labels[p])
    # ψ_k is not identically 1 on the support of a cell with a mixed neighborhood
    mixed = low != high
    boundary = mixed.copy()
    np.logical_or.at(boundary, p, mixed[q])
    np.logical_or.at(boundary, q, mixed[p])
    return boundary & (labels >= 0)


def average_field(  # noqa: PLR0913
    b: VectorField,
    mesh: Discretization,
    horizon: float,
    tau: float,
    eta: float,
    *,
    spec: QuadratureSpec | None = None,
) -> AveragedField:
    """Average a field over time slabs and the partition functions ψ_k.

    b̄^{l,k} = ∫_{t_l}^{t_{l+1}} ∫_Ω b ψ_k dx dt / (τ ‖ψ_k‖_{L¹(Ω)}), with
    Gauss-Legendre points in time and the cell rules of the mesh restricted to Ω
    in space.

    Args:
        b: The field.
        mesh: The mesh.
        horizon: Final time T.
        tau: Slab length; must divide T.
        eta: Box side; at least 8δx.
        spec: Quadrature point counts; defaults to the process settings.

    Returns:
        AveragedField: The averaged field.

    Raises:
        InvalidParameterError: If η < 8δx or τ does not divide T.
    """
    if eta < MIN_BOX_CELLS * mesh.dx * (1.0 - _SLAB_TOL):
        floor = MIN_BOX_CELLS * mesh.dx
        msg = f"Box side {eta:.4g} is below {MIN_BOX_CELLS:g} dx = {floor:.4g}"
        raise InvalidParameterError(msg)
    if tau <= 0.0 or horizon <= 0.0:
        msg = f"Slab length and horizon must be positive, got {tau} and {horizon}"
        raise InvalidParameterError(msg)
    slabs = round(horizon / tau)
    if slabs < 1 or not math.isclose(slabs * tau, horizon, rel_tol=_SLAB_TOL):
        msg = f"Slab length {tau:.6g} does not divide the horizon {horizon:.6g}"
        raise InvalidParameterError(msg)
    spec = get_settings().quadrature if spec is None else spec

    boxes = _boxes(mesh.domain, eta)
    labels = _assign(mesh, boxes)
    assigned = np.flatnonzero(labels >= 0)
    rules = [mesh.cell_quadrature(int(i), spec) for i in assigned]
    points = np.concatenate([r[0] for r in rules])
    weights = np.concatenate([r[1] for r in rules])
    weights = weights * shapely.contains_xy(mesh.domain, points[:, 0], points[:, 1])
    groups = np.repeat(labels[assigned], [len(r[1]) for r in rules])
    masses = np.bincount(groups, weights=weights, minlength=len(boxes))
    empty = masses <= 0.0
    if empty.any():
        logger.warning(
            "%d boxes carry no cell mass inside the domain", int(empty.sum())
        )

    times = np.linspace(0.0, horizon, slabs + 1)
    dim = mesh.dim
    averages = np.zeros((slabs, len(boxes), dim))
    for slab in range(slabs):
        start, end = times[slab], times[slab + 1]
        nodes, time_weights = gauss_interval(start, end, spec.time_points)
        for t, wt in zip(nodes.tolist(), time_weights.tolist(), strict=True):
            values = np.asarray(b(t, points), dtype=float)
            for d in range(dim):
                averages[slab, :, d] += wt * np.bincount(
                    groups, weights=weights * values[:, d], minlength=len(boxes)
                )
    averages /= tau * np.where(empty, 1.0, masses)[None, :, None]

    boundary = _boundary_cells(mesh, labels)
    logger.debug(
        "Averaged field: %d slabs of %.4g, %d boxes of side %.4g, %d boundary cells",
        slabs,
        tau,
        len(boxes),
        eta,
        int(boundary.sum()),
    )
    return AveragedField(
        times=times,
        eta=eta,
        boxes=boxes,
        labels=labels,
        masses=masses,
        averages=averages,
        boundary=boundary,
        mesh=mesh,
    )
