import numpy as np
import pytest
from numpy.typing import NDArray

from upwind_lab.core import Discretization
from upwind_lab.data_types import FaceCoeffs, InvalidParameterError, QuadratureSpec
from upwind_lab.discretize.norms import discrete_norm
from upwind_lab.discretize.projections import (
    discrete_divergence,
    polygon_scheme_coefficients,
    project_to_cell,
    project_to_face,
    project_to_face_alt,
)
from upwind_lab.discretize.quadrature import gauss_segment, polygon_quadrature
from upwind_lab.mesh.generators.cartesian import build_cartesian_mesh
from upwind_lab.mesh.hat import HatMesh, hat_exact_coefficients
from upwind_lab.mesh.mollified import MollifiedMesh, mollify_polygon_mesh
from upwind_lab.mesh.polygon import PolygonMesh


def _expanding(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.atleast_2d(x).copy()


def _eastward(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.tile([1.0, 0.0], (len(np.atleast_2d(x)), 1))


def _sheared(x: NDArray[np.float64]) -> NDArray[np.float64]:
    x = np.atleast_2d(x)
    return np.column_stack([x[:, 1] - 0.375, np.zeros(len(x))])


def _vertical_faces(mesh: PolygonMesh) -> NDArray[np.bool_]:
    return np.isclose(mesh.normals[:, 0], 1.0)


def test_gauss_segment_integrates_polynomials() -> None:
    """Test the segment rule on a cubic along a slanted segment."""
    a, b = np.array([0.0, 0.0]), np.array([3.0, 4.0])
    points, weights = gauss_segment(a, b, 2)
    s = np.linalg.norm(points, axis=1)
    assert np.isclose(weights @ s**3, 5.0**4 / 4.0)


def test_polygon_quadrature_weights_sum_to_area() -> None:
    """Test that polygon weights add up to the polygon area."""
    hexagon = np.array(
        [[1.0, 0.0], [2.0, 0.0], [3.0, 1.0], [2.0, 2.0], [1.0, 2.0], [0.0, 1.0]]
    )
    _, weights = polygon_quadrature(hexagon, 3)
    assert np.isclose(weights.sum(), 4.0)


@pytest.mark.parametrize("fixture", ["cartesian_polygon", "cartesian_mollified"])
def test_cell_projection_of_affine_functions(
    fixture: str, request: pytest.FixtureRequest
) -> None:
    """Test that constants are kept and x₁ projects to the barycenter."""
    mesh: Discretization = request.getfixturevalue(fixture)
    interior = mesh.interior
    constant = project_to_cell(mesh, lambda x: np.full(len(x), 3.0))
    assert np.allclose(constant[interior], 3.0)
    assert (constant[~interior] == 0.0).all()
    first = project_to_cell(mesh, lambda x: x[:, 0])
    assert np.allclose(first[interior], mesh.barycenters[interior, 0])


@pytest.mark.parametrize("fixture", ["cartesian_polygon", "cartesian_mollified"])
def test_divergence_of_linear_field_is_exact(
    fixture: str, request: pytest.FixtureRequest
) -> None:
    """Test D(P_F b) = P_C div b for b(x) = x on cells surrounded by faces."""
    mesh: Discretization = request.getfixturevalue(fixture)
    cells = mesh.interior.copy()
    if isinstance(mesh, PolygonMesh):
        # boundary edges of a polygon mesh are not faces
        cells &= np.array([len(mesh.neighbors(i)) == 4 for i in range(mesh.n_cells)])
    divergence = discrete_divergence(mesh, project_to_face(mesh, _expanding))
    gap = float(np.abs(divergence[cells] - 2.0).max())
    assert gap <= 1e-10, f"Discrete divergence off by {gap:.3e}"
    assert (divergence[~mesh.interior] == 0.0).all()


def test_constant_field_is_divergence_free(cartesian_mollified: MollifiedMesh) -> None:
    """Test that a constant field has zero discrete divergence."""
    divergence = discrete_divergence(
        cartesian_mollified, project_to_face(cartesian_mollified, _eastward)
    )
    assert np.abs(divergence).max() <= 1e-12


def test_face_projection_of_constant_field(cartesian_polygon: PolygonMesh) -> None:
    """Test that a constant field crosses only the vertical faces, from p into q."""
    coeffs = project_to_face(cartesian_polygon, _eastward)
    vertical = _vertical_faces(cartesian_polygon)
    assert np.allclose(coeffs.forward[vertical], 0.25)
    assert np.allclose(coeffs.forward[~vertical], 0.0)
    assert np.allclose(coeffs.backward, 0.0)


def test_positive_part_is_taken_inside_the_integral(
    cartesian_polygon: PolygonMesh,
) -> None:
    """Test both projections on faces where the flux changes sign."""
    mesh = cartesian_polygon
    inner = project_to_face(mesh, _sheared)
    outer = project_to_face_alt(mesh, _sheared)
    midpoints = mesh.vertices[mesh.face_vertices].mean(axis=1)
    split = _vertical_faces(mesh) & np.isclose(midpoints[:, 1], 0.375)
    assert split.sum() == 3
    assert np.allclose(inner.forward[split], 0.125**2 / 2.0)
    assert np.allclose(inner.backward[split], 0.125**2 / 2.0)
    assert np.allclose(outer.forward[split], 0.0)
    assert np.allclose(outer.backward[split], 0.0)
    flux_inner = inner.forward - inner.backward
    flux_outer = outer.forward - outer.backward
    assert np.allclose(flux_inner, flux_outer)


def test_quadrature_self_estimate(cartesian_mollified: MollifiedMesh) -> None:
    """Test that the refined rule agrees on a smooth field."""
    coeffs = project_to_face(
        cartesian_mollified, _eastward, QuadratureSpec(), estimate_error=True
    )
    assert coeffs.error_estimate is not None
    assert coeffs.error_estimate <= 1e-10


def test_hat_coefficients_of_constant_field(hat_mesh: HatMesh) -> None:
    """Test exact hat coefficients: no divergence and net flux along the field."""
    fields = np.tile([1.0, 0.5], (len(hat_mesh.triangulation.triangles), 1))
    coeffs = hat_exact_coefficients(hat_mesh, fields)
    divergence = discrete_divergence(hat_mesh, coeffs)
    assert np.abs(divergence).max() <= 1e-12
    assert (coeffs.forward >= 0.0).all()
    assert coeffs.forward.sum() + coeffs.backward.sum() > 0.0


def test_coefficients_of_another_mesh_are_rejected(
    cartesian_polygon: PolygonMesh, alternating_polygon: PolygonMesh
) -> None:
    """Test that coefficients are checked against the mesh."""
    coeffs = FaceCoeffs.zeros(alternating_polygon.faces, alternating_polygon.n_cells)
    with pytest.raises(InvalidParameterError):
        discrete_divergence(cartesian_polygon, coeffs)


def test_discrete_norms() -> None:
    """Test cell and face norms on hand-computed values."""
    volumes = np.array([0.25, 0.75])
    assert np.isclose(discrete_norm(np.array([2.0, 2.0]), 2.0, volumes=volumes), 2.0)
    assert discrete_norm(np.array([1.0, -3.0]), np.inf) == 3.0
    vectors = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert np.isclose(discrete_norm(vectors, 1.0, volumes=volumes), 1.25)
    coeffs = FaceCoeffs(
        np.array([[0, 1]]), np.array([2.0]), np.array([0.0]), n_cells=2
    )
    assert np.isclose(discrete_norm(coeffs, np.inf, "face", dx=0.5), 4.0)
    with pytest.raises(InvalidParameterError):
        discrete_norm(np.ones(2), 0.5, volumes=volumes)


def test_polygon_scheme_matches_mollified_mesh(
    cartesian_mollified: MollifiedMesh,
) -> None:
    """Test the polygon scheme against the face projection of its mollified mesh."""
    n = 64
    scheme = polygon_scheme_coefficients(build_cartesian_mesh(8, 8), _eastward)
    reference = project_to_face(cartesian_mollified, _eastward)
    keep = (reference.faces < n).all(axis=1)
    assert np.array_equal(scheme.coeffs.faces, reference.faces[keep])
    assert np.allclose(scheme.coeffs.forward, reference.forward[keep], atol=1e-12)
    assert np.allclose(scheme.coeffs.backward, reference.backward[keep], atol=1e-12)
    assert int(scheme.interior.sum()) == 16
    assert np.isclose(scheme.radius, cartesian_mollified.radius)


def test_divergence_of_curved_field() -> None:
    """Test D(P_F b) = P_C div b for b = (x₁ + sin x₂, x₂) on a finer mollified mesh."""
    mesh = mollify_polygon_mesh(build_cartesian_mesh(16, 16))

    def curved(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.column_stack([x[:, 0] + np.sin(x[:, 1]), x[:, 1]])

    divergence = discrete_divergence(mesh, project_to_face(mesh, curved))
    expected = project_to_cell(mesh, lambda x: np.full(len(x), 2.0))
    interior = mesh.interior
    assert interior.any()
    gap = float(np.abs(divergence[interior] - expected[interior]).max())
    assert gap <= 1e-5, f"Discrete divergence off by {gap:.3e}"
