import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import shapely
from numpy.typing import NDArray
from scipy.spatial import Delaunay
from shapely.geometry.base import BaseGeometry

from upwind_lab.data_types import (
    DegenerateCellError,
    InvalidParameterError,
    MeshValidationError,
)
from upwind_lab.mesh.polygon import check_unmatched_edges

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Triangulation:
    """A conforming triangulation with counter-clockwise triangles.

    Attributes:
        points (NDArray[np.float64]): Node coordinates, shape ``(n, 2)``.
        triangles (NDArray[np.int64]): Node indices, shape ``(m, 3)``.
        edges (NDArray[np.int64]): Unique edges ``(a, b)`` with ``a < b``.
        edge_triangles (NDArray[np.int64]): The one or two triangles of each edge,
            ``-1`` for a missing second triangle, shape ``(E, 2)``.
        boundary_nodes (NDArray[np.bool_]): Nodes on a boundary edge.
        areas (NDArray[np.float64]): Triangle areas.
        gradients (NDArray[np.float64]): Gradients of the barycentric coordinates,
            shape ``(m, 3, 2)``.
        domain (BaseGeometry): The triangulated domain.
    """

    points: NDArray[np.float64]
    triangles: NDArray[np.int64]
    edges: NDArray[np.int64]
    edge_triangles: NDArray[np.int64]
    boundary_nodes: NDArray[np.bool_]
    areas: NDArray[np.float64]
    gradients: NDArray[np.float64]
    domain: BaseGeometry

    @property
    def n_nodes(self) -> int:
        """Number of nodes."""
        return len(self.points)

    @cached_property
    def polygons(self) -> NDArray[np.object_]:
        """Shapely polygons of the triangles."""
        return shapely.polygons(self.points[self.triangles])

    @cached_property
    def _tree(self) -> shapely.STRtree:
        return shapely.STRtree(self.polygons)

    @cached_property
    def node_triangles(self) -> tuple[NDArray[np.int64], ...]:
        """Triangles around each node."""
        owners: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for t, tri in enumerate(self.triangles.tolist()):
            for node in tri:
                owners[node].append(t)
        return tuple(np.array(o, dtype=np.int64) for o in owners)

    def locate(self, points: NDArray[np.float64]) -> NDArray[np.int64]:
        """Index of a triangle containing each point, ``-1`` outside."""
        points = np.atleast_2d(points)
        point_idx, tri_idx = self._tree.query(
            shapely.points(points), predicate="intersects"
        )
        located = np.full(len(points), -1, dtype=np.int64)
        first, keep = np.unique(point_idx, return_index=True)
        located[first] = tri_idx[keep]
        return located

    def barycentric(
        self, points: NDArray[np.float64], triangles: NDArray[np.int64]
    ) -> NDArray[np.float64]:
        """Barycentric coordinates of points inside the given triangles."""
        v0 = self.points[self.triangles[triangles, 0]]
        rel = np.atleast_2d(points) - v0
        grads = self.gradients[triangles]
        l1 = np.einsum("kj,kj->k", rel, grads[:, 1])
        l2 = np.einsum("kj,kj->k", rel, grads[:, 2])
        return np.column_stack([1.0 - l1 - l2, l1, l2])


def _barycentric_gradients(
    corners: NDArray[np.float64], areas: NDArray[np.float64]
) -> NDArray[np.float64]:
    grads = np.empty_like(corners)
    for k in range(3):
        e = corners[:, (k + 2) % 3] - corners[:, (k + 1) % 3]
        grads[:, k, 0] = -e[:, 1]
        grads[:, k, 1] = e[:, 0]
    return grads / (2.0 * areas[:, None, None])


def build_triangulation(
    points: NDArray[np.float64] | Sequence[Sequence[float]],
    triangles: NDArray[np.int64] | Sequence[Sequence[int]],
    domain: BaseGeometry | None = None,
) -> Triangulation:
    """Validate a triangulation and precompute its geometry.

    Args:
        points: Node coordinates.
        triangles: Node indices of each triangle, in either orientation.
        domain: The domain; defaults to the union of the triangles.

    Returns:
        Triangulation: The validated triangulation.

    Raises:
        DegenerateCellError: If a triangle has zero area.
        MeshValidationError: If triangles overlap or a node is unused.
        NonConformingMeshError: If a node lies inside an edge of another triangle.
    """
    points = np.asarray(points, dtype=float)
    tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    corners = points[tris]
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    scale = float(np.ptp(points, axis=0).max()) or 1.0
    degenerate = np.flatnonzero(np.abs(signed) <= 1e-14 * scale * scale)
    if len(degenerate):
        msg = f"Triangle {int(degenerate[0])} is degenerate"
        raise DegenerateCellError(msg)
    flip = signed < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    areas = np.abs(signed)
    if (unused := np.setdiff1d(np.arange(len(points)), tris)).size:
        msg = f"Nodes {unused[:5].tolist()} belong to no triangle"
        raise MeshValidationError(msg)

    owner: dict[tuple[int, int], int] = {}
    for t, tri in enumerate(tris.tolist()):
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            if (a, b) in owner:
                msg = f"Triangles {owner[a, b]} and {t} overlap along ({a}, {b})"
                raise MeshValidationError(msg)
            owner[a, b] = t

    edge_list: list[tuple[int, int]] = []
    edge_tris: list[tuple[int, int]] = []
    unmatched: list[tuple[int, int, int]] = []
    for (a, b), t in owner.items():
        twin = owner.get((b, a))
        if twin is None:
            unmatched.append((t, a, b))
            edge_list.append((min(a, b), max(a, b)))
            edge_tris.append((t, -1))
        elif a < b:
            edge_list.append((a, b))
            edge_tris.append((t, twin))
    check_unmatched_edges(points, unmatched)

    edges = np.array(edge_list, dtype=np.int64)
    order = np.lexsort(edges.T[::-1])
    boundary = np.zeros(len(points), dtype=bool)
    for _, a, b in unmatched:
        boundary[a] = boundary[b] = True

    union = shapely.union_all(shapely.polygons(points[tris]))
    if abs(union.area - areas.sum()) > 1e-9 * areas.sum():
        msg = "Triangles do not have disjoint interiors"
        raise MeshValidationError(msg)
    logger.debug(
        "Built triangulation: %d nodes, %d triangles, %d boundary nodes",
        len(points),
        len(tris),
        int(boundary.sum()),
    )
    return Triangulation(
        points=points,
        triangles=tris,
        edges=edges[order],
        edge_triangles=np.array(edge_tris, dtype=np.int64)[order],
        boundary_nodes=boundary,
        areas=areas,
        gradients=_barycentric_gradients(points[tris], areas),
        domain=union if domain is None else domain,
    )


def structured_triangulation(
    nx: int, ny: int, bounds: Sequence[float] = (0.0, 0.0, 1.0, 1.0)
) -> Triangulation:
    """Split each rectangle of an ``nx`` by ``ny`` grid along its diagonal."""
    if nx < 1 or ny < 1:
        msg = f"Grid sizes must be positive, got ({nx}, {ny})"
        raise InvalidParameterError(msg)
    x0, y0, x1, y1 = bounds
    xs, ys = np.meshgrid(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1))
    points = np.column_stack([xs.ravel(), ys.ravel()])
    tris: list[tuple[int, int, int]] = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            tris.extend([(a, b, c), (a, c, d)])
    return build_triangulation(points, tris)


def disc_triangulation(
    resolution: float, radius: float = 1.0, center: Sequence[float] = (0.0, 0.0)
) -> Triangulation:
    """Quasi-uniform Delaunay triangulation of a disc.

    Nodes are a boundary ring, a sunflower pattern inside and the center.
    The domain is the polygon of the boundary ring.
    """
    if resolution <= 0.0 or resolution >= radius:
        msg = f"Resolution must lie in (0, {radius}), got {resolution}"
        raise InvalidParameterError(msg)
    n_boundary = max(int(np.ceil(2.0 * np.pi * radius / resolution)), 8)
    theta = np.linspace(0.0, 2.0 * np.pi, n_boundary, endpoint=False)
    ring = radius * np.column_stack([np.cos(theta), np.sin(theta)])

    n_interior = max(int(np.pi * radius**2 / (0.5 * np.sqrt(3.0) * resolution**2)), 1)
    k = np.arange(1, n_interior + 1)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    rho = (radius - 0.5 * resolution) * np.sqrt(k / n_interior)
    inner = np.column_stack([rho * np.cos(golden * k), rho * np.sin(golden * k)])
    inner = inner[rho > 0.5 * resolution]

    points = np.vstack([ring, np.zeros((1, 2)), inner]) + np.asarray(center)
    simplices = Delaunay(points).simplices
    return build_triangulation(
        points, simplices, shapely.Polygon(ring + np.asarray(center))
    )
