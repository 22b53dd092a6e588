import logging
from functools import cached_property

import numpy as np
import shapely
from numpy.typing import NDArray
from shapely.geometry.base import BaseGeometry

from upwind_lab.data_types import InvalidParameterError, QuadratureSpec
from upwind_lab.discretize.quadrature import (
    convolve_rules,
    disc_average_rule,
    gauss_segment,
    polygon_quadrature,
)
from upwind_lab.mesh.general import GeneralMesh
from upwind_lab.mesh.geometry import disc_polygon_area, disc_segment_chord
from upwind_lab.mesh.polygon import PolygonMesh

logger = logging.getLogger(__name__)

_DISTANCE_TOL = 1e-9


class MollifiedMesh(GeneralMesh):
    """Generalized mesh obtained by averaging a polygon mesh over balls of radius r.

    χ_i(x) = |V_i ∩ B(x, r)| / |B_r| and the face function of S_{i,j} is its
    surface measure averaged over B_r times N_{i,j}. Both are evaluated exactly.
    """

    def __init__(self, base: PolygonMesh, radius: float, domain: BaseGeometry) -> None:
        """Initialize the mesh.

        Args:
            base: Polygon cells, including the halo needed to cover Ω + B_r.
            radius: Averaging radius r.
            domain: The domain Ω.
        """
        self.base = base
        self.radius = radius
        self._domain = domain
        self._ball_area = np.pi * radius * radius

    @property
    def n_cells(self) -> int:
        """Number of cells, halo cells included."""
        return self.base.n_cells

    @property
    def faces(self) -> NDArray[np.int64]:
        """Faces of the underlying polygon mesh."""
        return self.base.faces

    @property
    def normals(self) -> NDArray[np.float64]:
        """Unit normals of the faces, pointing from p into q."""
        return self.base.normals

    @property
    def volumes(self) -> NDArray[np.float64]:
        """Cell volumes, equal to the polygon areas."""
        return self.base.volumes

    @property
    def barycenters(self) -> NDArray[np.float64]:
        """Cell barycenters, equal to the polygon centroids."""
        return self.base.barycenters

    @property
    def support_diameters(self) -> NDArray[np.float64]:
        """Diameters of V_i + B_r."""
        return self.base.diameters + 2.0 * self.radius

    @property
    def dx(self) -> float:
        """Largest support diameter."""
        return float(self.support_diameters.max())

    @property
    def domain(self) -> BaseGeometry:
        """The domain Ω."""
        return self._domain

    @cached_property
    def interior(self) -> NDArray[np.bool_]:
        """Cells with V_i + B_r ⊂ Ω."""
        return self._inside(self.base.polygons)

    @cached_property
    def face_interior(self) -> NDArray[np.bool_]:
        """Faces with S_{i,j} + B_r ⊂ Ω."""
        if not len(self.faces):
            return np.zeros(0, dtype=bool)
        segments = shapely.linestrings(self.base.vertices[self.base.face_vertices])
        return self._inside(segments)

    def _inside(self, shapes: NDArray[np.object_]) -> NDArray[np.bool_]:
        padded = shapely.buffer(
            self._domain, _DISTANCE_TOL * self.radius, join_style="mitre"
        )
        covered = shapely.covers(padded, shapes)
        distance = shapely.distance(shapes, self._domain.boundary)
        return np.asarray(
            covered & (distance >= self.radius * (1.0 - _DISTANCE_TOL)), dtype=bool
        )

    @cached_property
    def _tree(self) -> shapely.STRtree:
        return shapely.STRtree(self.base.polygons)

    def chi(self, i: int, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Exact χ_i through disc-polygon intersection areas."""
        points = np.atleast_2d(points)
        area = disc_polygon_area(points, self.radius, self.base.cell_vertices(i))
        return np.clip(area / self._ball_area, 0.0, 1.0)

    def chi_gradient(
        self, i: int, points: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """Exact ∇χ_i = −Σ_k N_k |∂V_i-edge_k ∩ B(x, r)| / |B_r| over outward edges."""
        points = np.atleast_2d(points)
        verts = self.base.cell_vertices(i)
        grad = np.zeros((len(points), 2))
        for k in range(len(verts)):
            a, b = verts[k], verts[(k + 1) % len(verts)]
            d = b - a
            outward = np.array([d[1], -d[0]]) / np.linalg.norm(d)
            chord = disc_segment_chord(points, self.radius, a, b)
            grad -= chord[:, None] * outward[None, :]
        return grad / self._ball_area

    def cells_near(self, points: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
        """Pairs (point index, cell index) with B(x, r) meeting the cell."""
        centers = shapely.points(np.atleast_2d(points))
        return self._tree.query(centers, predicate="dwithin", distance=self.radius)

    def partition_sum(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Σ_i χ_i evaluated cell by cell over the cells near each point."""
        points = np.atleast_2d(points)
        point_idx, cell_idx = self.cells_near(points)
        total = np.zeros(len(points))
        for i in np.unique(cell_idx).tolist():
            sel = point_idx[cell_idx == i]
            vertices = self.base.cell_vertices(i)
            area = disc_polygon_area(points[sel], self.radius, vertices)
            np.add.at(total, sel, area / self._ball_area)
        return total

    def face_function(
        self, f: int, points: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """n_{q,p}(x) = N |S ∩ B(x, r)| / |B_r|."""
        points = np.atleast_2d(points)
        a, b = self.base.vertices[self.base.face_vertices[f]]
        chord = disc_segment_chord(points, self.radius, a, b)
        return chord[:, None] * self.normals[f][None, :] / self._ball_area

    def face_sup_norms(self) -> NDArray[np.float64]:
        """sup |n| = min(|S|, 2r) / |B_r|."""
        return np.minimum(self.base.face_areas, 2.0 * self.radius) / self._ball_area

    def cell_quadrature(
        self, i: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """∫ f χ_i = avg_{y ∈ B_r} ∫_{V_i} f(z + y) dz."""
        points, weights = polygon_quadrature(
            self.base.cell_vertices(i), spec.cell_points
        )
        offsets, offset_weights = disc_average_rule(
            self.radius, spec.ball_radial, spec.ball_angular
        )
        return convolve_rules(points, weights, offsets, offset_weights)

    def face_quadrature(
        self, f: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """∫ F(g·n) = ∫_S avg_{y ∈ B_r} F(g(s + y)·N) ds, F positively homogeneous."""
        a, b = self.base.vertices[self.base.face_vertices[f]]
        points, weights = gauss_segment(a, b, spec.face_points)
        offsets, offset_weights = disc_average_rule(
            self.radius, spec.ball_radial, spec.ball_angular
        )
        points, weights = convolve_rules(points, weights, offsets, offset_weights)
        return points, weights, np.broadcast_to(self.normals[f], points.shape)

    def face_direction(self, f: int) -> NDArray[np.float64]:
        """The normal N of the underlying face."""
        return self.normals[f]


def mollify_polygon_mesh(
    mesh: PolygonMesh,
    radius: float | None = None,
    *,
    unity_margin: float = 0.0,
) -> MollifiedMesh:
    """Turn a polygon mesh into a generalized mesh by ball averaging.

    When the mesh comes from a periodic tiling, halo cells are added as lattice
    translates so that the cell functions sum to one on Ω + B(0, unity_margin).

    Args:
        mesh: The polygon mesh.
        radius: Averaging radius r in (0, δx]; defaults to δx.
        unity_margin: Width of the neighbourhood of Ω on which Σχ_i = 1 is required.

    Returns:
        MollifiedMesh: The generalized mesh. Cells of ``mesh`` keep their indices.

    Raises:
        InvalidParameterError: If the radius is not in (0, δx] or the margin is
            negative.
    """
    r = mesh.dx if radius is None else float(radius)
    if not 0.0 < r <= mesh.dx * (1.0 + 1e-12):
        msg = f"Mollification radius must lie in (0, {mesh.dx:.6g}], got {r}"
        raise InvalidParameterError(msg)
    if unity_margin < 0.0:
        msg = f"Unity margin must be nonnegative, got {unity_margin}"
        raise InvalidParameterError(msg)

    domain = mesh.domain
    if mesh.tiling is not None:
        base = mesh.tiling.build(margin=r + unity_margin)
    else:
        base = mesh
        union = shapely.union_all(mesh.polygons)
        if not shapely.covers(union, shapely.buffer(domain, r + unity_margin)):
            logger.warning(
                "Mesh without periodic pattern does not cover Ω + B(0, %.4g); "
                "Σχ_i = 1 only holds away from its outer boundary",
                r + unity_margin,
            )
    mollified = MollifiedMesh(base, r, domain)
    logger.info(
        "Mollified %d cells (%d halo) with radius %.4g: %d interior cells",
        base.n_cells,
        base.n_cells - mesh.n_cells,
        r,
        int(mollified.interior.sum()),
    )
    return mollified
