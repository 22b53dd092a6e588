import logging
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from shapely.geometry.base import BaseGeometry

from upwind_lab.data_types import FaceCoeffs, QuadratureSpec
from upwind_lab.discretize.quadrature import reference_triangle_rule
from upwind_lab.mesh.general import GeneralMesh
from upwind_lab.mesh.geometry import diameter
from upwind_lab.mesh.triangulation import Triangulation

logger = logging.getLogger(__name__)


class HatMesh(GeneralMesh):
    """Generalized mesh whose cell functions are the P1 hat functions.

    The face function of an edge (p, q) is n_{q,p} = χ_p∇χ_q − χ_q∇χ_p; it is
    supported on the one or two triangles of the edge.
    """

    def __init__(self, triangulation: Triangulation) -> None:
        """Initialize the mesh from a validated triangulation."""
        self.triangulation = triangulation

    @property
    def n_cells(self) -> int:
        """Number of nodes."""
        return self.triangulation.n_nodes

    @property
    def faces(self) -> NDArray[np.int64]:
        """Edges of the triangulation."""
        return self.triangulation.edges

    @cached_property
    def volumes(self) -> NDArray[np.float64]:
        """π_i = Σ_{T ∋ i} |T| / 3."""
        tri = self.triangulation
        out = np.zeros(self.n_cells)
        np.add.at(out, tri.triangles.ravel(), np.repeat(tri.areas / 3.0, 3))
        return out

    @cached_property
    def barycenters(self) -> NDArray[np.float64]:
        """x_i = Σ_{T ∋ i} |T| (2x_i + x_j + x_k) / 12 / π_i."""
        tri = self.triangulation
        corners = tri.points[tri.triangles]
        total = corners.sum(axis=1)
        moments = np.zeros((self.n_cells, 2))
        for k in range(3):
            contrib = tri.areas[:, None] * (corners[:, k] + total) / 12.0
            np.add.at(moments, tri.triangles[:, k], contrib)
        return moments / self.volumes[:, None]

    @cached_property
    def support_diameters(self) -> NDArray[np.float64]:
        """Diameters of the vertex stars."""
        tri = self.triangulation
        return np.array(
            [
                diameter(tri.points[np.unique(tri.triangles[owners])])
                for owners in tri.node_triangles
            ]
        )

    @property
    def dx(self) -> float:
        """Largest star diameter."""
        return float(self.support_diameters.max())

    @property
    def domain(self) -> BaseGeometry:
        """The triangulated domain."""
        return self.triangulation.domain

    @property
    def interior(self) -> NDArray[np.bool_]:
        """Nodes off the boundary."""
        return ~self.triangulation.boundary_nodes

    @cached_property
    def face_interior(self) -> NDArray[np.bool_]:
        """Edges with at least one interior end point."""
        return self.interior[self.faces].any(axis=1)

    def _local(self, points: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
        points = np.atleast_2d(points)
        located = self.triangulation.locate(points)
        bary = np.zeros((len(points), 3))
        inside = located >= 0
        bary[inside] = self.triangulation.barycentric(points[inside], located[inside])
        return located, bary

    def _hat(self, i: int, located: NDArray, bary: NDArray) -> NDArray[np.float64]:
        tris = self.triangulation.triangles[np.maximum(located, 0)]
        slot = tris == i
        values = (bary * slot).sum(axis=1)
        return np.where(located >= 0, values, 0.0)

    def chi(self, i: int, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Hat function of node i."""
        located, bary = self._local(points)
        return self._hat(i, located, bary)

    def chi_gradient(
        self, i: int, points: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """Piecewise constant gradient of the hat function of node i."""
        located, _ = self._local(points)
        safe = np.maximum(located, 0)
        slot = self.triangulation.triangles[safe] == i
        grads = (self.triangulation.gradients[safe] * slot[:, :, None]).sum(axis=1)
        return np.where((located >= 0)[:, None], grads, 0.0)

    def partition_sum(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Σ_i χ_i, which is the sum of the barycentric coordinates."""
        located, bary = self._local(points)
        return np.where(located >= 0, bary.sum(axis=1), 0.0)

    def face_function(
        self, f: int, points: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """n_{q,p} = χ_p∇χ_q − χ_q∇χ_p."""
        p, q = self.faces[f]
        located, bary = self._local(points)
        chi_p = self._hat(int(p), located, bary)
        chi_q = self._hat(int(q), located, bary)
        safe = np.maximum(located, 0)
        tris = self.triangulation.triangles[safe]
        grads = self.triangulation.gradients[safe]
        grad_p = (grads * (tris == p)[:, :, None]).sum(axis=1)
        grad_q = (grads * (tris == q)[:, :, None]).sum(axis=1)
        values = chi_p[:, None] * grad_q - chi_q[:, None] * grad_p
        return np.where((located >= 0)[:, None], values, 0.0)

    def _edge_slots(self, f: int) -> list[tuple[int, int, int]]:
        """(triangle, local slot of p, local slot of q) for the triangles of face f."""
        p, q = self.faces[f].tolist()
        slots = []
        for t in self.triangulation.edge_triangles[f].tolist():
            if t < 0:
                continue
            tri = self.triangulation.triangles[t].tolist()
            slots.append((t, tri.index(p), tri.index(q)))
        return slots

    def cell_quadrature(
        self, i: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Collapsed Gauss rule on the star of node i, weighted by χ_i."""
        tri = self.triangulation
        bary, weights = reference_triangle_rule(spec.cell_points)
        points, out = [], []
        for t in tri.node_triangles[i].tolist():
            slot = tri.triangles[t].tolist().index(i)
            points.append(bary @ tri.points[tri.triangles[t]])
            out.append(weights * tri.areas[t] * bary[:, slot])
        return np.concatenate(points), np.concatenate(out)

    def face_quadrature(
        self, f: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Collapsed Gauss rule on the triangles of the edge with vectors n_{q,p}."""
        tri = self.triangulation
        bary, weights = reference_triangle_rule(spec.face_points)
        points, out, vectors = [], [], []
        for t, sp, sq in self._edge_slots(f):
            grads = tri.gradients[t]
            points.append(bary @ tri.points[tri.triangles[t]])
            out.append(weights * tri.areas[t])
            vectors.append(
                bary[:, sp, None] * grads[sq][None, :]
                - bary[:, sq, None] * grads[sp][None, :]
            )
        return np.concatenate(points), np.concatenate(out), np.concatenate(vectors)

    def face_sup_norms(self) -> NDArray[np.float64]:
        """sup |n_{q,p}| = max(|∇χ_p|, |∇χ_q|) over the triangles of the edge."""
        tri = self.triangulation
        norms = np.linalg.norm(tri.gradients, axis=2)
        out = np.zeros(len(self.faces))
        for f in range(len(self.faces)):
            for t, sp, sq in self._edge_slots(f):
                out[f] = max(out[f], norms[t, sp], norms[t, sq])
        return out


def _positive_part_integral(
    area: NDArray[np.float64], alpha: NDArray[np.float64], beta: NDArray[np.float64]
) -> NDArray[np.float64]:
    """∫_T f^+ for f linear with values alpha, beta and 0 at the corners."""
    both = (alpha >= 0) & (beta >= 0)
    only_alpha = (alpha > 0) & (beta < 0)
    only_beta = (beta > 0) & (alpha < 0)
    out = np.zeros_like(alpha)
    out[both] = area[both] * (alpha[both] + beta[both]) / 3.0
    a, b = alpha[only_alpha], beta[only_alpha]
    out[only_alpha] = area[only_alpha] * a * a / (3.0 * (a - b))
    a, b = alpha[only_beta], beta[only_beta]
    out[only_beta] = area[only_beta] * b * b / (3.0 * (b - a))
    return out


def hat_exact_coefficients(
    mesh: HatMesh, fields: NDArray[np.float64], time: float | None = None
) -> FaceCoeffs:
    """Exact upwind coefficients of a field that is constant on each triangle.

    On a triangle with corners p, q and k, b·n_{q,p} is linear with values
    b·∇χ_q at p, −b·∇χ_p at q and 0 at k, so the positive part integrates in
    closed form.

    Args:
        mesh: The hat mesh.
        fields: One vector per triangle, shape ``(m, 2)``.
        time: Time stamp of the field.

    Returns:
        FaceCoeffs: Coefficients, zero on faces outside Ω.
    """
    tri = mesh.triangulation
    projected = np.einsum("tkj,tj->tk", tri.gradients, fields)
    forward = np.zeros(len(mesh.faces))
    backward = np.zeros(len(mesh.faces))
    for side in range(2):
        t = tri.edge_triangles[:, side]
        valid = t >= 0
        faces = np.flatnonzero(valid)
        t = t[valid]
        local = tri.triangles[t]
        sp = np.argmax(local == mesh.faces[faces, 0][:, None], axis=1)
        sq = np.argmax(local == mesh.faces[faces, 1][:, None], axis=1)
        alpha = projected[t, sq]
        beta = -projected[t, sp]
        area = tri.areas[t]
        forward[faces] += _positive_part_integral(area, alpha, beta)
        backward[faces] += _positive_part_integral(area, -alpha, -beta)
    mask = mesh.face_interior
    return FaceCoeffs(
        mesh.faces,
        np.where(mask, forward, 0.0),
        np.where(mask, backward, 0.0),
        mesh.n_cells,
        time,
    )


def hat_mesh_from_triangulation(triangulation: Triangulation) -> HatMesh:
    """Build the generalized mesh of P1 hats over a validated triangulation."""
    mesh = HatMesh(triangulation)
    logger.info(
        "Hat mesh: %d cells, %d faces, %d interior cells",
        mesh.n_cells,
        len(mesh.faces),
        int(mesh.interior.sum()),
    )
    return mesh
