from collections.abc import Callable, Generator
from pathlib import Path

import numpy as np
import pytest

from upwind_lab.container import MeshBundle, build_mesh
from upwind_lab.mesh.generators.alternating import build_alternating_mesh
from upwind_lab.mesh.generators.cartesian import build_cartesian_mesh
from upwind_lab.mesh.hat import HatMesh, hat_mesh_from_triangulation
from upwind_lab.mesh.mollified import MollifiedMesh, mollify_polygon_mesh
from upwind_lab.mesh.polygon import PolygonMesh
from upwind_lab.mesh.triangulation import structured_triangulation
from upwind_lab.settings import MeshSource, Settings, reset_settings, set_settings


@pytest.fixture(autouse=True)
def _default_settings() -> Generator[None, None, None]:
    """Runs every test against default settings and restores them afterwards."""
    token = set_settings(Settings())
    yield
    reset_settings(token)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def cartesian_polygon() -> PolygonMesh:
    """4 x 4 cartesian polygon mesh of the unit square."""
    return build_cartesian_mesh(4, 4)


@pytest.fixture
def alternating_polygon() -> PolygonMesh:
    """Alternating mesh of the unit square with rows of height 1/4."""
    return build_alternating_mesh(0.25)


@pytest.fixture
def cartesian_mollified() -> MollifiedMesh:
    """8 x 8 cartesian mesh mollified at radius δx, with its halo."""
    return mollify_polygon_mesh(build_cartesian_mesh(8, 8))


@pytest.fixture
def cartesian_bundle() -> MeshBundle:
    """Mollified 8 x 8 cartesian mesh with its validated periodic structure."""
    return build_mesh(MeshSource(generator="cartesian", params={"nx": 8, "ny": 8}))


@pytest.fixture
def hat_mesh() -> HatMesh:
    """Hat cell functions on a 6 x 6 structured triangulation of the unit square."""
    return hat_mesh_from_triangulation(structured_triangulation(6, 6))


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str], Path]:
    """Factory writing a TOML experiment config into the test directory."""

    def _write(text: str, name: str = "experiment.toml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
