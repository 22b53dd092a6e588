import logging
from pathlib import Path
from typing import Self

import numpy as np
import shapely
from pydantic import BaseModel, ConfigDict, Field, model_validator

from upwind_lab.data_types import MeshValidationError
from upwind_lab.mesh.periodic import PeriodicStructure
from upwind_lab.mesh.polygon import PatternTiling, PolygonMesh, build_polygon_mesh

logger = logging.getLogger(__name__)

MESH_SCHEMA_VERSION = 1


class PeriodicBlock(BaseModel):
    """Periodic pattern stored with a mesh.

    Attributes:
        pattern_indices (list[int]): Cells of the pattern, ordered by slot.
        lattice (list[tuple[float, float]]): Lattice vectors.
        sigma (list[tuple[int, int, int]]): Lattice offset and slot of every cell.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    pattern_indices: list[int]
    lattice: list[tuple[float, float]]
    sigma: list[tuple[int, int, int]]


class MeshDocument(BaseModel):
    """JSON document of a polygon mesh.

    Attributes:
        schema_version (int): Version of the document layout.
        vertices (list[tuple[float, float]]): Vertex coordinates.
        cells (list[list[int]]): Counter-clockwise vertex indices of each cell.
        faces (list[tuple[int, int]]): Cell pairs ``(p, q)`` with ``p < q``.
        normals (list[tuple[float, float]]): Unit normals from p into q.
        domain (list[tuple[float, float]] | None): Exterior ring of Ω.
        periodic (PeriodicBlock | None): Optional periodic pattern.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: int = Field(default=MESH_SCHEMA_VERSION)
    vertices: list[tuple[float, float]]
    cells: list[list[int]]
    faces: list[tuple[int, int]] = Field(default_factory=list)
    normals: list[tuple[float, float]] = Field(default_factory=list)
    domain: list[tuple[float, float]] | None = None
    periodic: PeriodicBlock | None = None

    @model_validator(mode="after")
    def _check_indices(self) -> Self:
        n_vertices = len(self.vertices)
        for i, cell in enumerate(self.cells):
            if any(not 0 <= v < n_vertices for v in cell):
                msg = f"Cell {i} references a vertex outside [0, {n_vertices})"
                raise ValueError(msg)
        if len(self.faces) != len(self.normals):
            msg = "Faces and normals must have the same length"
            raise ValueError(msg)
        if self.periodic is not None and len(self.periodic.sigma) != len(self.cells):
            msg = "The periodic block needs one σ entry per cell"
            raise ValueError(msg)
        return self


def write_mesh(
    mesh: PolygonMesh, path: str | Path, periodic: PeriodicStructure | None = None
) -> Path:
    """Write a polygon mesh and its optional periodic structure as JSON.

    Args:
        mesh: The mesh.
        path: Destination file.
        periodic: Periodic structure declared on ``mesh``.

    Returns:
        Path: The written file.
    """
    block = None
    if periodic is not None:
        block = PeriodicBlock(
            pattern_indices=periodic.pattern.tolist(),
            lattice=[tuple(v) for v in periodic.lattice.tolist()],
            sigma=[tuple(s) for s in periodic.sigma.tolist()],
        )
    exterior = getattr(mesh.domain, "exterior", None)
    document = MeshDocument(
        vertices=[tuple(v) for v in mesh.vertices.tolist()],
        cells=[c.tolist() for c in mesh.cells],
        faces=[tuple(f) for f in mesh.faces.tolist()],
        normals=[tuple(n) for n in mesh.normals.tolist()],
        domain=None if exterior is None else [tuple(c) for c in exterior.coords[:-1]],
        periodic=block,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=1), encoding="utf-8")
    logger.info("Wrote mesh with %d cells to %s", mesh.n_cells, path)
    return path


def read_mesh(path: str | Path) -> tuple[PolygonMesh, PeriodicBlock | None]:
    """Read a mesh written by `write_mesh`.

    When the document carries a periodic block whose cells are in tiling order,
    the returned mesh is rebuilt from its pattern so that it can be extended by
    halo cells.

    Args:
        path: The JSON file.

    Returns:
        The mesh and the stored periodic block, if any.

    Raises:
        MeshValidationError: If the stored faces disagree with the cells.
    """
    document = MeshDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    vertices = np.array(document.vertices, dtype=float)
    domain = None if document.domain is None else shapely.Polygon(document.domain)
    mesh = build_polygon_mesh(vertices, document.cells, domain)

    stored = np.array(document.faces, dtype=np.int64).reshape(-1, 2)
    if not np.array_equal(stored, mesh.faces):
        msg = f"Stored faces of {path} do not match the faces of its cells"
        raise MeshValidationError(msg)
    normals = np.array(document.normals, dtype=float).reshape(-1, 2)
    if normals.size and np.abs(normals - mesh.normals).max() > 1e-12:
        msg = f"Stored normals of {path} do not match the geometry of its cells"
        raise MeshValidationError(msg)

    block = document.periodic
    if block is not None:
        sigma = np.array(block.sigma, dtype=np.int64)
        pattern = tuple(mesh.cell_vertices(i) for i in block.pattern_indices)
        tiling = PatternTiling(
            pattern=pattern,
            lattice=np.array(block.lattice, dtype=float),
            origin=np.zeros(2),
            domain=mesh.domain,
        )
        rebuilt = tiling.build()
        offsets = sigma[:, :2] - sigma[block.pattern_indices[0], :2]
        if rebuilt.sigma is not None and np.array_equal(
            rebuilt.sigma, np.column_stack([offsets, sigma[:, 2]])
        ):
            mesh = build_polygon_mesh(
                vertices, document.cells, mesh.domain, tiling=tiling, sigma=sigma
            )
        else:
            logger.warning(
                "Cells of %s are not in tiling order; halo extension is unavailable",
                path,
            )
            mesh = build_polygon_mesh(
                vertices, document.cells, mesh.domain, sigma=sigma
            )
    logger.info("Read mesh with %d cells from %s", mesh.n_cells, path)
    return mesh, block
