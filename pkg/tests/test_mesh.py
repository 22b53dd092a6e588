from pathlib import Path

import numpy as np
import pytest
import shapely

from upwind_lab.data_types import (
    DegenerateCellError,
    InvalidParameterError,
    NonConformingMeshError,
    PeriodicityError,
)
from upwind_lab.mesh.generators.alternating import build_alternating_mesh
from upwind_lab.mesh.generators.hexagonal import build_hexagonal_mesh
from upwind_lab.mesh.hat import HatMesh
from upwind_lab.mesh.io import read_mesh, write_mesh
from upwind_lab.mesh.mollified import MollifiedMesh, mollify_polygon_mesh
from upwind_lab.mesh.periodic import declare_periodic, pattern_declaration
from upwind_lab.mesh.polygon import PolygonMesh, build_polygon_mesh
from upwind_lab.mesh.structural import validate_structural


def test_cartesian_mesh_topology(cartesian_polygon: PolygonMesh) -> None:
    """Test cell and face counts, orientation and volumes of a cartesian grid."""
    mesh = cartesian_polygon
    assert mesh.n_cells == 16
    assert len(mesh.faces) == 24, f"Expected 24 faces, got {len(mesh.faces)}"
    assert (mesh.faces[:, 0] < mesh.faces[:, 1]).all()
    assert np.allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)
    assert np.isclose(mesh.volumes.sum(), 1.0)
    assert mesh.interior.all()
    assert np.isclose(mesh.dx, np.sqrt(2.0) / 4.0)


def test_normals_point_from_p_into_q(cartesian_polygon: PolygonMesh) -> None:
    """Test that every stored normal points from the first cell into the second."""
    mesh = cartesian_polygon
    centers = mesh.barycenters
    step = centers[mesh.faces[:, 1]] - centers[mesh.faces[:, 0]]
    assert (np.einsum("ij,ij->i", step, mesh.normals) > 0.0).all()


def test_alternating_mesh_has_two_resolutions(alternating_polygon: PolygonMesh) -> None:
    """Test the 24-cell alternating mesh with coarse and fine rows."""
    mesh = alternating_polygon
    assert mesh.n_cells == 24, f"Expected 24 cells, got {mesh.n_cells}"
    assert np.isclose(mesh.volumes.sum(), 1.0)
    coarse = np.isclose(mesh.volumes, 1.0 / 16.0)
    fine = np.isclose(mesh.volumes, 1.0 / 32.0)
    assert coarse.sum() == 8
    assert fine.sum() == 16


def test_alternating_mesh_at_one_third() -> None:
    """Test the alternating mesh with three rows."""
    assert build_alternating_mesh(1.0 / 3.0).n_cells == 12


def test_alternating_mesh_rejects_indivisible_height() -> None:
    """Test that a row height not dividing the square is rejected."""
    with pytest.raises(InvalidParameterError):
        build_alternating_mesh(0.3)


def test_hanging_node_is_rejected() -> None:
    """Test that a cell sitting on two smaller cells without a shared vertex fails."""
    vertices = [
        (0.0, 0.0),
        (1.0, 0.0),
        (2.0, 0.0),
        (0.0, 1.0),
        (1.0, 1.0),
        (2.0, 1.0),
        (0.0, 2.0),
        (2.0, 2.0),
    ]
    cells = [[0, 1, 4, 3], [1, 2, 5, 4], [3, 5, 7, 6]]
    with pytest.raises(NonConformingMeshError) as info:
        build_polygon_mesh(vertices, cells)
    assert 2 in info.value.cells


def test_degenerate_cell_is_rejected() -> None:
    """Test that a cell with collinear vertices fails."""
    vertices = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0)]
    with pytest.raises(DegenerateCellError):
        build_polygon_mesh(vertices, [[0, 1, 2], [0, 1, 3]])


def test_structural_report_of_cartesian_grid(cartesian_polygon: PolygonMesh) -> None:
    """Test the measured constants of a uniform grid."""
    report = validate_structural(cartesian_polygon)
    assert report.n_cells == 16
    assert report.n_interior == 16
    assert np.isclose(report.volume_ratio, 1.0)
    assert np.isclose(report.volume_lower, 0.5)
    assert np.isclose(report.diameter_ratio_min, 1.0)
    assert report.face_bound is None
    assert report.flagged_cells == ()


def test_mollified_cell_functions_sum_to_one(
    cartesian_mollified: MollifiedMesh, rng: np.random.Generator
) -> None:
    """Test the partition of unity of a mollified mesh on the domain."""
    points = rng.uniform(0.0, 1.0, size=(200, 2))
    total = cartesian_mollified.partition_sum(points)
    gap = float(np.abs(total - 1.0).max())
    assert gap <= 1e-9, f"Partition of unity violated by {gap:.3e}"


def test_mollified_mesh_keeps_volumes(cartesian_mollified: MollifiedMesh) -> None:
    """Test that ball averaging keeps the cell volumes and shrinks the interior."""
    mesh = cartesian_mollified
    assert np.allclose(mesh.volumes[:64], 1.0 / 64.0)
    assert mesh.n_cells > 64
    assert int(mesh.interior.sum()) == 16
    report = validate_structural(mesh)
    assert report.face_bound is not None
    assert report.face_bound > 0.0


def test_mollification_radius_is_bounded(cartesian_polygon: PolygonMesh) -> None:
    """Test that a radius above δx is rejected."""
    with pytest.raises(InvalidParameterError):
        mollify_polygon_mesh(cartesian_polygon, 2.0 * cartesian_polygon.dx)


def test_hat_mesh_partition(hat_mesh: HatMesh, rng: np.random.Generator) -> None:
    """Test volumes, interior nodes and partition of unity of hat cell functions."""
    assert hat_mesh.n_cells == 49
    assert int(hat_mesh.interior.sum()) == 25
    assert np.isclose(hat_mesh.volumes.sum(), 1.0)
    points = rng.uniform(0.0, 1.0, size=(100, 2))
    assert np.allclose(hat_mesh.partition_sum(points), 1.0)


def test_declare_periodic_hexagons() -> None:
    """Test the periodic declaration recorded by the hexagon generator."""
    mesh = build_hexagonal_mesh(0.1)
    structure = declare_periodic(mesh, *pattern_declaration(mesh))
    assert structure.pattern_size == 1
    i = int(structure.pattern[0])
    j = structure.translate(i, (1, 0))
    assert j >= 0
    assert np.allclose(mesh.barycenters[j] - mesh.barycenters[i], structure.lattice[0])


def test_declare_periodic_rejects_wrong_lattice(cartesian_polygon: PolygonMesh) -> None:
    """Test that a lattice whose translates leave gaps is rejected."""
    pattern, lattice, sigma = pattern_declaration(cartesian_polygon)
    with pytest.raises(PeriodicityError):
        declare_periodic(cartesian_polygon, pattern, 2.0 * lattice, sigma)


def test_mesh_file_roundtrip(cartesian_polygon: PolygonMesh, tmp_path: Path) -> None:
    """Test that a written mesh reads back with its faces and periodic block."""
    structure = declare_periodic(
        cartesian_polygon, *pattern_declaration(cartesian_polygon)
    )
    path = write_mesh(cartesian_polygon, tmp_path / "mesh.json", structure)
    mesh, block = read_mesh(path)
    assert np.array_equal(mesh.faces, cartesian_polygon.faces)
    assert np.allclose(mesh.normals, cartesian_polygon.normals)
    assert block is not None
    assert block.pattern_indices == structure.pattern.tolist()
    assert mesh.sigma is not None
    assert np.array_equal(mesh.sigma, structure.sigma)


def test_cells_with_different_vertex_counts() -> None:
    """Test a mesh mixing squares and a triangle."""
    vertices = [
        (0.0, 0.0),
        (1.0, 0.0),
        (2.0, 0.0),
        (0.0, 1.0),
        (1.0, 1.0),
        (2.0, 1.0),
        (1.0, 2.0),
    ]
    cells = [[0, 1, 4, 3], [1, 2, 5, 4], [3, 4, 6]]
    mesh = build_polygon_mesh(vertices, cells)
    assert mesh.n_cells == 3
    assert np.allclose(mesh.volumes, [1.0, 1.0, 0.5])
    areas = [polygon.area for polygon in mesh.polygons]
    assert np.allclose(areas, mesh.volumes)
    counts = {len(polygon.exterior.coords) - 1 for polygon in mesh.polygons}
    assert counts == {3, 4}


def test_alternating_polygons_mix_vertex_counts(
    alternating_polygon: PolygonMesh,
) -> None:
    """Test that coarse cells carry the hanging vertices of the fine rows."""
    polygons = alternating_polygon.polygons
    counts = {len(polygon.exterior.coords) - 1 for polygon in polygons}
    assert counts == {4, 6}
    assert np.allclose(
        [polygon.area for polygon in polygons],
        alternating_polygon.volumes,
    )


def test_partition_of_unity_near_grazing_cells(
    cartesian_mollified: MollifiedMesh,
) -> None:
    """Test points whose disc barely reaches a neighbouring cell."""
    mesh = cartesian_mollified
    points = np.array([[0.8585, 0.4253], [0.5, 0.5], [0.125 + mesh.radius, 0.3]])
    gap = np.abs(mesh.partition_sum(points) - 1.0)
    assert gap.max() <= 1e-10, f"Partition of unity violated by {gap.max():.3e}"
    _, cells = mesh.cells_near(points[:1])
    distance = shapely.distance(mesh.base.polygons, shapely.Point(points[0]))
    assert set(cells.tolist()) == set(np.flatnonzero(distance <= mesh.radius).tolist())


def test_declare_periodic_alternating_rows(alternating_polygon: PolygonMesh) -> None:
    """Test the three-cell pattern of the alternating mesh and a too short lattice."""
    mesh = alternating_polygon
    pattern, lattice, sigma = pattern_declaration(mesh)
    assert np.allclose(lattice, [[0.25, 0.0], [0.0, 0.5]])
    structure = declare_periodic(mesh, pattern, lattice, sigma)
    assert structure.pattern_size == 3
    assert np.isclose(mesh.volumes[structure.pattern].sum(), 2.0 * 0.25**2)
    i = int(structure.pattern[0])
    j = structure.translate(i, (0, 1))
    assert j >= 0
    assert np.allclose(mesh.barycenters[j] - mesh.barycenters[i], [0.0, 0.5])
    with pytest.raises(PeriodicityError):
        declare_periodic(mesh, pattern, np.array([[0.25, 0.0], [0.0, 0.25]]), sigma)


def test_hat_faces_balance_the_gradient(
    hat_mesh: HatMesh, rng: np.random.Generator
) -> None:
    """Test Σ_j n_{j,i} + ∇χ_i = 0 for every node of the triangulation."""
    points = rng.uniform(0.0, 1.0, size=(300, 2))
    for i in range(hat_mesh.n_cells):
        total = hat_mesh.face_divergence_sum(i, points) + hat_mesh.chi_gradient(
            i, points
        )
        assert np.abs(total).max() <= 1e-10, f"Node {i} off by {np.abs(total).max()}"


def test_structural_constants_do_not_depend_on_h() -> None:
    """Test that refining the alternating mesh keeps its structural constants."""
    coarse = validate_structural(build_alternating_mesh(0.25))
    fine = validate_structural(build_alternating_mesh(0.125))
    assert fine.n_cells == 4 * coarse.n_cells
    for report in (coarse, fine):
        assert np.isclose(report.volume_ratio, 2.0)
        assert np.isclose(report.volume_lower, 0.25)
        assert np.isclose(report.diameter_ratio_min, np.sqrt(1.25 / 2.0))
    assert np.isclose(fine.diameter_constant, coarse.diameter_constant)
    assert np.isclose(fine.volume_upper, coarse.volume_upper)
