import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import shapely
from numpy.typing import NDArray
from shapely.geometry import LineString, Polygon
from shapely.geometry.base import BaseGeometry

from upwind_lab.data_types import (
    DegenerateCellError,
    MeshValidationError,
    NonConformingMeshError,
    QuadratureSpec,
)
from upwind_lab.discretize.quadrature import gauss_segment, polygon_quadrature
from upwind_lab.mesh.geometry import centroid, diameter, is_convex, signed_area

logger = logging.getLogger(__name__)

_AREA_TOL = 1e-12
_OVERLAP_TOL = 1e-9


def polygon_array(rings: Sequence[NDArray[np.float64]]) -> NDArray[np.object_]:
    """Object array of shapely polygons; the rings may have different lengths."""
    out = np.empty(len(rings), dtype=object)
    out[:] = [Polygon(ring) for ring in rings]
    return out


@dataclass(frozen=True, eq=False)
class PolygonMesh:
    """A conforming mesh of convex polygons.

    Faces are stored once as ``(p, q)`` with ``p < q``; ``normals[f]`` is the unit
    normal of the face pointing from cell p into cell q, so that it equals
    N_{q,p} = −N_{p,q}.

    Attributes:
        vertices (NDArray[np.float64]): Vertex coordinates, shape ``(nv, 2)``.
        cells (tuple[NDArray[np.int64], ...]): Counter-clockwise vertex indices.
        faces (NDArray[np.int64]): Cell pairs sharing a face, shape ``(F, 2)``.
        face_vertices (NDArray[np.int64]): End points of each face, shape ``(F, 2)``.
        normals (NDArray[np.float64]): Unit normals from p into q, shape ``(F, 2)``.
        face_areas (NDArray[np.float64]): Face lengths.
        volumes (NDArray[np.float64]): Cell areas |V_i|.
        barycenters (NDArray[np.float64]): Cell centroids.
        diameters (NDArray[np.float64]): Cell diameters.
        dx (float): Discretization size, the largest cell diameter.
        domain (BaseGeometry): The domain Ω.
        interior (NDArray[np.bool_]): Cells contained in Ω.
        face_interior (NDArray[np.bool_]): Faces contained in Ω.
        tiling (PatternTiling | None): Periodic pattern the mesh was generated from.
        sigma (NDArray[np.int64] | None): Lattice offset and pattern slot per cell,
            shape ``(n, 3)``; present when the mesh comes from a tiling.
    """

    vertices: NDArray[np.float64]
    cells: tuple[NDArray[np.int64], ...]
    faces: NDArray[np.int64]
    face_vertices: NDArray[np.int64]
    normals: NDArray[np.float64]
    face_areas: NDArray[np.float64]
    volumes: NDArray[np.float64]
    barycenters: NDArray[np.float64]
    diameters: NDArray[np.float64]
    dx: float
    domain: BaseGeometry
    interior: NDArray[np.bool_]
    face_interior: NDArray[np.bool_]
    tiling: "PatternTiling | None" = None
    sigma: NDArray[np.int64] | None = None

    @property
    def n_cells(self) -> int:
        """Number of cells."""
        return len(self.cells)

    @property
    def dim(self) -> int:
        """Space dimension."""
        return 2

    @property
    def support_diameters(self) -> NDArray[np.float64]:
        """Diameters of the cells."""
        return self.diameters

    def cell_vertices(self, i: int) -> NDArray[np.float64]:
        """Coordinates of the vertices of cell i."""
        return self.vertices[self.cells[i]]

    @cached_property
    def polygons(self) -> NDArray[np.object_]:
        """Shapely polygons of the cells."""
        return polygon_array([self.cell_vertices(i) for i in range(self.n_cells)])

    @cached_property
    def face_index(self) -> dict[tuple[int, int], int]:
        """Map from an ordered cell pair to its face number."""
        index: dict[tuple[int, int], int] = {}
        for f, (p, q) in enumerate(self.faces.tolist()):
            index[p, q] = f
            index[q, p] = f
        return index

    def normal(self, i: int, j: int) -> NDArray[np.float64]:
        """Unit normal N_{i,j} of S_{i,j}, pointing into cell i."""
        f = self.face_index[i, j]
        return -self.normals[f] if self.faces[f, 0] == i else self.normals[f]

    def neighbors(self, i: int) -> NDArray[np.int64]:
        """Cells sharing a face with cell i."""
        mask = (self.faces == i).any(axis=1)
        pairs = self.faces[mask]
        return np.where(pairs[:, 0] == i, pairs[:, 1], pairs[:, 0])

    def chi(self, i: int, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Indicator function of cell i."""
        pts = shapely.points(np.atleast_2d(points))
        return shapely.covers(self.polygons[i], pts).astype(float)

    def cell_quadrature(
        self, i: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Rule for ∫ f 1_{V_i}."""
        return polygon_quadrature(self.cell_vertices(i), spec.cell_points)

    def face_quadrature(
        self, f: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Rule for ∫ g·n over the face segment with n = N δ_S."""
        a, b = self.vertices[self.face_vertices[f]]
        points, weights = gauss_segment(a, b, spec.face_points)
        return points, weights, np.broadcast_to(self.normals[f], points.shape)

    def face_direction(self, f: int) -> NDArray[np.float64] | None:
        """Constant direction of the face measure."""
        return self.normals[f]

    def with_domain(self, domain: BaseGeometry) -> "PolygonMesh":
        """Return the same cells over another domain."""
        return build_polygon_mesh(
            self.vertices,
            self.cells,
            domain,
            tiling=self.tiling,
            sigma=self.sigma,
        )


@dataclass(frozen=True, eq=False)
class PatternTiling:
    """A finite set of pattern polygons repeated along a lattice.

    Attributes:
        pattern (tuple[NDArray[np.float64], ...]): Counter-clockwise polygons of the
            pattern, relative to the lattice origin.
        lattice (NDArray[np.float64]): Lattice vectors as rows, shape ``(2, 2)``.
        origin (NDArray[np.float64]): Position of the zero translate.
        domain (BaseGeometry): Domain covered by the base mesh.
    """

    pattern: tuple[NDArray[np.float64], ...]
    lattice: NDArray[np.float64]
    origin: NDArray[np.float64]
    domain: BaseGeometry

    def _offset_range(self, margin: float) -> tuple[range, range]:
        x0, y0, x1, y1 = self.domain.bounds
        reach = margin + max(diameter(p) + float(np.abs(p).max()) for p in self.pattern)
        corners = np.array(
            [
                [x0 - reach, y0 - reach],
                [x1 + reach, y0 - reach],
                [x0 - reach, y1 + reach],
                [x1 + reach, y1 + reach],
            ]
        )
        coords = np.linalg.solve(self.lattice.T, (corners - self.origin).T).T
        lo = np.floor(coords.min(axis=0)).astype(int) - 1
        hi = np.ceil(coords.max(axis=0)).astype(int) + 1
        return range(lo[0], hi[0] + 1), range(lo[1], hi[1] + 1)

    def build(self, margin: float = 0.0) -> PolygonMesh:
        """Tile the cells needed to cover Ω + B(0, margin).

        Cells covering Ω come first, in the same order for every margin, so that
        extending a mesh keeps the indices of its original cells.

        Args:
            margin: Width of the neighbourhood of Ω that must be covered.

        Returns:
            PolygonMesh: The tiled mesh over the tiling domain.
        """
        range1, range2 = self._offset_range(margin)
        candidates: list[tuple[int, int, int, NDArray[np.float64]]] = []
        for m2 in range2:
            for m1 in range1:
                shift = self.origin + m1 * self.lattice[0] + m2 * self.lattice[1]
                candidates.extend(
                    (m1, m2, slot, poly + shift)
                    for slot, poly in enumerate(self.pattern)
                )
        polys = polygon_array([c[3] for c in candidates])
        areas = shapely.area(shapely.intersection(polys, self.domain))
        core = areas > _AREA_TOL * shapely.area(polys)
        if margin > 0.0:
            halo = ~core & (shapely.distance(polys, self.domain) < margin)
        else:
            halo = np.zeros_like(core)
        order = np.concatenate([np.flatnonzero(core), np.flatnonzero(halo)])

        scale = float(np.abs(self.lattice).max())
        keys: dict[tuple[int, int], int] = {}
        vertices: list[NDArray[np.float64]] = []
        cells: list[list[int]] = []
        sigma: list[tuple[int, int, int]] = []
        for k in order:
            m1, m2, slot, poly = candidates[k]
            ids: list[int] = []
            for point in poly:
                key = tuple(np.round(point / scale * 1e9).astype(np.int64).tolist())
                if key not in keys:
                    keys[key] = len(vertices)
                    vertices.append(point)
                ids.append(keys[key])
            cells.append(ids)
            sigma.append((m1, m2, slot))
        logger.debug(
            "Tiled %d core and %d halo cells (margin %.4g)",
            int(core.sum()),
            int(halo.sum()),
            margin,
        )
        return build_polygon_mesh(
            np.array(vertices),
            cells,
            self.domain,
            tiling=self,
            sigma=np.array(sigma, dtype=np.int64),
        )


def check_unmatched_edges(
    vertices: NDArray[np.float64],
    edges: list[tuple[int, int, int]],
) -> None:
    """Reject collinear partial overlaps among edges without a twin."""
    if len(edges) < 2:  # noqa: PLR2004
        return
    lines = shapely.linestrings(
        [[vertices[a], vertices[b]] for _, a, b in edges]
    )
    tree = shapely.STRtree(lines)
    left, right = tree.query(lines, predicate="intersects")
    for k, m in zip(left.tolist(), right.tolist(), strict=True):
        if k >= m:
            continue
        cell_k, cell_m = edges[k][0], edges[m][0]
        if cell_k == cell_m:
            continue
        overlap = shapely.intersection(lines[k], lines[m])
        if overlap.length > _OVERLAP_TOL * max(lines[k].length, lines[m].length):
            raise NonConformingMeshError(
                min(cell_k, cell_m),
                max(cell_k, cell_m),
                f"overlap of length {overlap.length:.3g}",
            )


def build_polygon_mesh(  # noqa: C901, PLR0912, PLR0915
    vertices: NDArray[np.float64] | Sequence[Sequence[float]],
    cell_vertex_lists: Sequence[Sequence[int]],
    domain: BaseGeometry | None = None,
    *,
    tiling: PatternTiling | None = None,
    sigma: NDArray[np.int64] | None = None,
) -> PolygonMesh:
    """Build and validate a conforming polygon mesh.

    Args:
        vertices: Vertex coordinates, shape ``(nv, 2)``.
        cell_vertex_lists: Vertex indices of each convex cell, in either orientation.
        domain: The domain Ω; defaults to the union of the cells.
        tiling: Periodic pattern the cells were generated from.
        sigma: Lattice offset and pattern slot of each cell.

    Returns:
        PolygonMesh: The validated mesh.

    Raises:
        DegenerateCellError: If a cell has zero area.
        MeshValidationError: If a cell is not convex or cells overlap.
        NonConformingMeshError: If two cells share only part of a face.
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:  # noqa: PLR2004
        msg = f"Vertices must have shape (n, 2), got {vertices.shape}"
        raise MeshValidationError(msg)
    scale = float(np.ptp(vertices, axis=0).max()) or 1.0

    cells: list[NDArray[np.int64]] = []
    volumes = np.empty(len(cell_vertex_lists))
    for i, ids in enumerate(cell_vertex_lists):
        idx = np.asarray(ids, dtype=np.int64)
        if len(idx) < 3:  # noqa: PLR2004
            msg = f"Cell {i} has fewer than three vertices"
            raise DegenerateCellError(msg)
        area = signed_area(vertices[idx])
        if abs(area) <= _AREA_TOL * scale * scale:
            msg = f"Cell {i} is degenerate (area {area:.3g})"
            raise DegenerateCellError(msg)
        if area < 0:
            idx = idx[::-1].copy()
            area = -area
        if not is_convex(vertices[idx]):
            msg = f"Cell {i} is not convex"
            raise MeshValidationError(msg)
        idx.setflags(write=False)
        cells.append(idx)
        volumes[i] = area

    owner: dict[tuple[int, int], int] = {}
    for i, idx in enumerate(cells):
        for a, b in zip(idx.tolist(), np.roll(idx, -1).tolist(), strict=True):
            if (a, b) in owner:
                msg = f"Cells {owner[a, b]} and {i} overlap along edge ({a}, {b})"
                raise MeshValidationError(msg)
            owner[a, b] = i

    faces: list[tuple[int, int]] = []
    face_vertices: list[tuple[int, int]] = []
    unmatched: list[tuple[int, int, int]] = []
    for (a, b), p in owner.items():
        q = owner.get((b, a))
        if q is None:
            unmatched.append((p, a, b))
        elif p < q:
            faces.append((p, q))
            face_vertices.append((a, b))
    check_unmatched_edges(vertices, unmatched)

    polys = polygon_array([vertices[idx] for idx in cells])
    union = shapely.union_all(polys)
    if abs(union.area - volumes.sum()) > 1e-9 * volumes.sum():
        msg = (
            f"Cells do not have disjoint interiors: total area {volumes.sum():.12g}"
            f" vs union area {union.area:.12g}"
        )
        raise MeshValidationError(msg)

    order = np.lexsort(np.array(faces).T[::-1]) if faces else np.empty(0, dtype=int)
    faces_arr = np.array(faces, dtype=np.int64).reshape(-1, 2)[order]
    fv = np.array(face_vertices, dtype=np.int64).reshape(-1, 2)[order]
    seg = vertices[fv[:, 1]] - vertices[fv[:, 0]]
    face_areas = np.linalg.norm(seg, axis=1)
    # (a, b) runs counter-clockwise around p, so (dy, -dx) points out of p
    normals = np.column_stack([seg[:, 1], -seg[:, 0]]) / face_areas[:, None]

    barycenters = np.array([centroid(vertices[idx]) for idx in cells])
    diameters = np.array([diameter(vertices[idx]) for idx in cells])

    if domain is None:
        domain = union
    padded = shapely.buffer(domain, 1e-9 * scale, join_style="mitre")
    interior = shapely.covers(padded, polys)
    segments = shapely.linestrings(vertices[fv]) if len(fv) else np.empty(0)
    face_interior = (
        shapely.covers(padded, segments) if len(fv) else np.zeros(0, dtype=bool)
    )
    uncovered = shapely.difference(domain, union).area
    if uncovered > 1e-9 * domain.area:
        logger.warning("The cells leave an area of %.3g uncovered", uncovered)

    logger.debug(
        "Built polygon mesh: %d cells, %d faces, %d boundary edges",
        len(cells),
        len(faces_arr),
        len(unmatched),
    )
    return PolygonMesh(
        vertices=vertices,
        cells=tuple(cells),
        faces=faces_arr,
        face_vertices=fv,
        normals=normals,
        face_areas=face_areas,
        volumes=volumes,
        barycenters=barycenters,
        diameters=diameters,
        dx=float(diameters.max()),
        domain=domain,
        interior=np.asarray(interior, dtype=bool),
        face_interior=np.asarray(face_interior, dtype=bool),
        tiling=tiling,
        sigma=sigma,
    )


def rectangle(bounds: Sequence[float]) -> Polygon:
    """Axis-aligned rectangle from ``(x0, y0, x1, y1)``."""
    x0, y0, x1, y1 = bounds
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def segment(mesh: PolygonMesh, f: int) -> LineString:
    """The face segment f as a shapely line."""
    return LineString(mesh.vertices[mesh.face_vertices[f]])
