from pathlib import Path
from typing import Any, Protocol

import numpy as np
from numpy.typing import NDArray
from shapely.geometry.base import BaseGeometry

from upwind_lab.data_types import QuadratureSpec


class Discretization(Protocol):
    """Protocol for meshes the projections and the scheme operate on.

    Both sharp polygon meshes and generalized meshes implement it. Faces are
    stored once as ``(p, q)`` with ``p < q`` and oriented for transfer from p into q.
    """

    @property
    def dim(self) -> int:
        """Space dimension."""
        ...

    @property
    def n_cells(self) -> int:
        """Number of cells."""
        ...

    @property
    def faces(self) -> NDArray[np.int64]:
        """Cell pairs of the faces, shape ``(F, 2)``."""
        ...

    @property
    def volumes(self) -> NDArray[np.float64]:
        """Cell volumes π_i."""
        ...

    @property
    def barycenters(self) -> NDArray[np.float64]:
        """Cell barycenters x_i."""
        ...

    @property
    def support_diameters(self) -> NDArray[np.float64]:
        """Diameters of the supports of the cell functions."""
        ...

    @property
    def dx(self) -> float:
        """Discretization size δx."""
        ...

    @property
    def domain(self) -> BaseGeometry:
        """The domain Ω."""
        ...

    @property
    def interior(self) -> NDArray[np.bool_]:
        """Cells in V_Ω°, on which the scheme evolves."""
        ...

    @property
    def face_interior(self) -> NDArray[np.bool_]:
        """Faces in E_Ω°, on which coefficients may be nonzero."""
        ...

    @property
    def face_index(self) -> dict[tuple[int, int], int]:
        """Map from an ordered cell pair to its face number."""
        ...

    def neighbors(self, i: int) -> NDArray[np.int64]:
        """Cells sharing a face with cell i."""
        ...

    def chi(self, i: int, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the cell function χ_i."""
        ...

    def cell_quadrature(
        self, i: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Rule with Σ w_k f(x_k) ≈ ∫ f χ_i."""
        ...

    def face_quadrature(
        self, f: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Points, weights and vectors representing the face function of face f."""
        ...

    def face_direction(self, f: int) -> NDArray[np.float64] | None:
        """Constant direction of the face function, if it factors as N w."""
        ...


class VectorField(Protocol):
    """Protocol for velocity fields b(t, x).

    Attributes:
        time_dependent (bool): Whether the field varies in time.
        sobolev (str): Declared regularity, for example ``"W^{1,inf}"``.
    """

    time_dependent: bool
    sobolev: str

    def __call__(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the field at points of shape ``(m, 2)``.

        Args:
            t: Time.
            x: Points.

        Returns:
            NDArray[np.float64]: Vectors of shape ``(m, 2)``.
        """
        ...

    def divergence(self, t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate div b at points of shape ``(m, 2)``."""
        ...


class MeshGenerator(Protocol):
    """Protocol for the catalog of built-in meshes."""

    def build(self) -> Any:  # noqa: ANN401
        """Build the mesh described by the generator parameters.

        Returns:
            A `PolygonMesh` or a `GeneralMesh`.
        """
        ...


class Experiment(Protocol):
    """Protocol for reproducible experiment runs.

    Attributes:
        output (Path): Directory receiving the artifacts.
    """

    output: Path

    def run(self) -> dict[str, Any]:
        """Run the experiment, writing its CSV artifacts.

        Returns:
            dict[str, Any]: Measured constants embedded in the summary JSON.
        """
        ...
