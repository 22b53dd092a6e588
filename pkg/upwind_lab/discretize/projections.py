"""Projection of functions on the cells and of vector fields on the faces of a mesh."""

import logging
from collections.abc import Callable
from dataclasses import dataclass
from itertools import pairwise

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq

from upwind_lab.core import Discretization
from upwind_lab.data_types import (
    CellValues,
    FaceCoeffs,
    InvalidParameterError,
    QuadratureError,
    QuadratureSpec,
)
from upwind_lab.discretize.quadrature import gauss_interval
from upwind_lab.mesh.mollified import mollify_polygon_mesh
from upwind_lab.mesh.polygon import PolygonMesh
from upwind_lab.settings import get_settings

logger = logging.getLogger(__name__)

type SpatialField = Callable[[NDArray[np.float64]], NDArray[np.float64]]
"""A function of space evaluated at points of shape ``(m, 2)``."""


def _locate_failure(
    field: SpatialField, points: NDArray[np.float64], owners: NDArray[np.int64]
) -> int:
    for owner in np.unique(owners).tolist():
        try:
            field(points[owners == owner])
        except Exception:  # noqa: BLE001
            return owner
    return -1


def _evaluate(
    field: SpatialField,
    points: NDArray[np.float64],
    owners: NDArray[np.int64],
    what: str,
) -> NDArray[np.float64]:
    try:
        values = np.asarray(field(points), dtype=float)
    except Exception as exc:
        owner = _locate_failure(field, points, owners)
        msg = f"Evaluation of the field failed on {what} {owner}"
        raise QuadratureError(msg) from exc
    if len(values) != len(points):
        msg = f"Field returned {len(values)} values for {len(points)} points"
        raise QuadratureError(msg)
    bad = ~np.isfinite(values.reshape(len(points), -1)).all(axis=1)
    if bad.any():
        msg = f"Field is not finite on {what} {int(owners[bad][0])}"
        raise QuadratureError(msg)
    return values


def _resolve_spec(spec: QuadratureSpec | None) -> QuadratureSpec:
    return get_settings().quadrature if spec is None else spec


def project_to_cell(
    mesh: Discretization, field: SpatialField, spec: QuadratureSpec | None = None
) -> CellValues:
    """Compute (P_C f)_i = (1/π_i) ∫ f χ_i on interior cells.

    Args:
        mesh: The mesh.
        field: Scalar or vector function of space.
        spec: Quadrature point counts; defaults to the process settings.

    Returns:
        CellValues: Shape ``(n,)`` for scalar and ``(n, d)`` for vector fields,
        zero outside the interior cells.

    Raises:
        QuadratureError: If the field cannot be evaluated on some cell.
    """
    spec = _resolve_spec(spec)
    n = mesh.n_cells
    cells = np.flatnonzero(mesh.interior)
    if not len(cells):
        return np.zeros(n)
    rules = [mesh.cell_quadrature(int(i), spec) for i in cells]
    points = np.concatenate([r[0] for r in rules])
    weights = np.concatenate([r[1] for r in rules])
    owners = np.repeat(cells, [len(r[1]) for r in rules])
    values = _evaluate(field, points, owners, "cell")

    if values.ndim == 1:
        out = np.bincount(owners, weights=weights * values, minlength=n)
        out[~mesh.interior] = 0.0
        out[cells] /= mesh.volumes[cells]
        return out
    out = np.column_stack(
        [
            np.bincount(owners, weights=weights * values[:, k], minlength=n)
            for k in range(values.shape[1])
        ]
    )
    out[~mesh.interior] = 0.0
    out[cells] /= mesh.volumes[cells, None]
    return out


_FaceRules = tuple[
    NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.int64]
]


def _face_rules(
    mesh: Discretization, active: NDArray[np.int64], spec: QuadratureSpec
) -> _FaceRules:
    rules = [mesh.face_quadrature(int(f), spec) for f in active]
    if not rules:
        return np.empty((0, 2)), np.empty(0), np.empty((0, 2)), np.empty(0, np.int64)
    points = np.concatenate([r[0] for r in rules])
    weights = np.concatenate([r[1] for r in rules])
    vectors = np.concatenate([r[2] for r in rules])
    owners = np.repeat(active, [len(r[1]) for r in rules])
    return points, weights, vectors, owners


def _split_sharp_faces(
    mesh: PolygonMesh,
    active: NDArray[np.int64],
    field: SpatialField,
    spec: QuadratureSpec,
) -> _FaceRules:
    """Gauss rules on the face segments, split where b·N changes sign."""
    if not len(active):
        return np.empty((0, 2)), np.empty(0), np.empty((0, 2)), np.empty(0, np.int64)
    n = spec.face_points
    ends = mesh.vertices[mesh.face_vertices[active]]
    start, delta = ends[:, 0], ends[:, 1] - ends[:, 0]
    normals = mesh.normals[active]
    lengths = mesh.face_areas[active]

    samples = np.linspace(0.0, 1.0, 2 * n + 1)
    sample_points = start[:, None, :] + samples[None, :, None] * delta[:, None, :]
    values = _evaluate(
        field, sample_points.reshape(-1, 2), np.repeat(active, len(samples)), "face"
    )
    flux = (values.reshape(len(active), len(samples), 2) * normals[:, None, :]).sum(-1)

    points, weights, vectors, owners = [], [], [], []
    for row, f in enumerate(active.tolist()):
        g = flux[row]
        breaks = [0.0]
        for k in range(len(samples) - 1):
            if 0 < k and g[k] == 0.0:
                breaks.append(float(samples[k]))
            elif g[k] * g[k + 1] < 0.0:

                def crossing(s: float, row: int = row) -> float:
                    x = start[row] + s * delta[row]
                    return float(np.asarray(field(x[None, :]))[0] @ normals[row])

                breaks.append(brentq(crossing, samples[k], samples[k + 1], xtol=1e-15))
        breaks.append(1.0)
        for s0, s1 in pairwise(breaks):
            s, w = gauss_interval(s0, s1, n)
            points.append(start[row][None, :] + s[:, None] * delta[row][None, :])
            weights.append(w * lengths[row])
            vectors.append(np.broadcast_to(normals[row], (n, 2)))
            owners.append(np.full(n, f, dtype=np.int64))
    return (
        np.concatenate(points),
        np.concatenate(weights),
        np.concatenate(vectors),
        np.concatenate(owners),
    )


def _positive_parts(
    mesh: Discretization, field: SpatialField, spec: QuadratureSpec
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    n_faces = len(mesh.faces)
    active = np.flatnonzero(mesh.face_interior)
    if isinstance(mesh, PolygonMesh):
        points, weights, vectors, owners = _split_sharp_faces(mesh, active, field, spec)
    else:
        points, weights, vectors, owners = _face_rules(mesh, active, spec)
    if not len(points):
        return np.zeros(n_faces), np.zeros(n_faces)
    values = _evaluate(field, points, owners, "face")
    flux = np.einsum("ij,ij->i", values, vectors)
    forward = np.bincount(
        owners, weights=weights * np.maximum(flux, 0.0), minlength=n_faces
    )
    backward = np.bincount(
        owners, weights=weights * np.maximum(-flux, 0.0), minlength=n_faces
    )
    return forward, backward


def project_to_face(
    mesh: Discretization,
    field: SpatialField,
    spec: QuadratureSpec | None = None,
    *,
    time: float | None = None,
    estimate_error: bool = False,
) -> FaceCoeffs:
    """Compute the upwind coefficients a_{i,j} = ∫ (b·n_{i,j})⁺.

    On sharp polygon faces the segment rule is split at the sign changes of
    b·N. On generalized faces the face rule of the mesh is used as is; with
    ``estimate_error`` the result is compared with the refined rule.

    Args:
        mesh: The mesh.
        field: Vector field b evaluated at a fixed time.
        spec: Quadrature point counts; defaults to the process settings.
        time: Time stamp stored with the coefficients.
        estimate_error: Whether to compute the quadrature self-estimate.

    Returns:
        FaceCoeffs: Nonnegative coefficients, zero on faces not contained in Ω.

    Raises:
        QuadratureError: If the field cannot be evaluated on some face.
    """
    spec = _resolve_spec(spec)
    forward, backward = _positive_parts(mesh, field, spec)
    error = None
    if estimate_error:
        fine_forward, fine_backward = _positive_parts(mesh, field, spec.refined())
        error = float(
            max(
                np.abs(fine_forward - forward).max(initial=0.0),
                np.abs(fine_backward - backward).max(initial=0.0),
            )
        )
        logger.debug("Face quadrature self-estimate %.3e", error)
    return FaceCoeffs(mesh.faces, forward, backward, mesh.n_cells, time, error)


def face_fluxes(
    mesh: Discretization, field: SpatialField, spec: QuadratureSpec | None = None
) -> NDArray[np.float64]:
    """Signed fluxes ∫ b·n_{q,p} of every face, zero on faces not contained in Ω."""
    spec = _resolve_spec(spec)
    n_faces = len(mesh.faces)
    active = np.flatnonzero(mesh.face_interior)
    points, weights, vectors, owners = _face_rules(mesh, active, spec)
    if not len(points):
        return np.zeros(n_faces)
    values = _evaluate(field, points, owners, "face")
    flux = np.einsum("ij,ij->i", values, vectors)
    return np.bincount(owners, weights=weights * flux, minlength=n_faces)


def project_to_face_alt(
    mesh: Discretization,
    field: SpatialField,
    spec: QuadratureSpec | None = None,
    *,
    time: float | None = None,
) -> FaceCoeffs:
    """Compute a_{i,j} = (∫ b·n_{i,j})⁺, the positive part taken outside the integral.

    Raises:
        InvalidParameterError: If a face function is not a fixed direction times
            a nonnegative weight.
    """
    for f in np.flatnonzero(mesh.face_interior).tolist():
        if mesh.face_direction(f) is None:
            msg = (
                f"Face {f} between cells {tuple(mesh.faces[f].tolist())} has no "
                "constant direction; the outer positive part is undefined"
            )
            raise InvalidParameterError(msg)
    flux = face_fluxes(mesh, field, spec)
    return FaceCoeffs(
        mesh.faces, np.maximum(flux, 0.0), np.maximum(-flux, 0.0), mesh.n_cells, time
    )


def discrete_divergence(mesh: Discretization, coeffs: FaceCoeffs) -> CellValues:
    """Compute D_k = (1/π_k) Σ_i (a_{i,k} − a_{k,i}) on interior cells.

    Raises:
        InvalidParameterError: If the coefficients belong to another mesh.
    """
    _check_coefficients(mesh, coeffs)
    matrix = coeffs.matrix()
    outflow = np.asarray(matrix.sum(axis=0)).ravel()
    inflow = np.asarray(matrix.sum(axis=1)).ravel()
    divergence = np.zeros(mesh.n_cells)
    interior = mesh.interior
    divergence[interior] = (outflow - inflow)[interior] / mesh.volumes[interior]
    return divergence


def _check_coefficients(mesh: Discretization, coeffs: FaceCoeffs) -> None:
    if coeffs.n_cells != mesh.n_cells or not np.array_equal(coeffs.faces, mesh.faces):
        msg = (
            f"Coefficients on {coeffs.n_cells} cells and {len(coeffs.faces)} faces do "
            f"not belong to a mesh with {mesh.n_cells} cells "
            f"and {len(mesh.faces)} faces"
        )
        raise InvalidParameterError(msg)


@dataclass(frozen=True, slots=True)
class PolygonScheme:
    """Coefficients of the upwind scheme written directly on a polygon mesh.

    Attributes:
        coeffs (FaceCoeffs): a_{i,j} = (avg_{B_r} ∫_{S_{i,j}} b(x + y)·N_{i,j})⁺.
        interior (NDArray[np.bool_]): Cells with V_i + B_r ⊂ Ω.
        radius (float): Averaging radius r.
    """

    coeffs: FaceCoeffs
    interior: NDArray[np.bool_]
    radius: float


def polygon_scheme_coefficients(
    mesh: PolygonMesh,
    field: SpatialField,
    spec: QuadratureSpec | None = None,
    *,
    radius: float | None = None,
    time: float | None = None,
) -> PolygonScheme:
    """Coefficients and active cells of the upwind scheme on a polygon mesh.

    Args:
        mesh: The polygon mesh.
        field: Vector field b at a fixed time.
        spec: Quadrature point counts.
        radius: Averaging radius r in (0, δx]; defaults to δx.
        time: Time stamp stored with the coefficients.

    Returns:
        PolygonScheme: Coefficients on the faces of ``mesh`` and its active cells.
    """
    mollified = mollify_polygon_mesh(mesh, radius)
    full = project_to_face_alt(mollified, field, spec, time=time)
    n = mesh.n_cells
    keep = (mollified.faces < n).all(axis=1)
    if not np.array_equal(mollified.faces[keep], mesh.faces):
        msg = "Halo extension changed the faces of the mesh"
        raise InvalidParameterError(msg)
    coeffs = FaceCoeffs(
        mesh.faces, full.forward[keep], full.backward[keep], n, time
    )
    logger.debug(
        "Polygon scheme with radius %.4g: %d of %d cells active",
        mollified.radius,
        int(mollified.interior[:n].sum()),
        n,
    )
    return PolygonScheme(coeffs, mollified.interior[:n].copy(), mollified.radius)
