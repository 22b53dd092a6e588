import abc
import logging
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from shapely.geometry.base import BaseGeometry

from upwind_lab.data_types import QuadratureSpec

logger = logging.getLogger(__name__)


class GeneralMesh(abc.ABC):
    """A mesh given by cell functions χ_i and face functions n_{i,j}.

    Faces are the pairs ``(p, q)`` with ``p < q`` whose face function does not
    vanish; face f carries n_{q,p}, the face function for transfer from p into q,
    and n_{p,q} = −n_{q,p}.
    """

    @property
    def dim(self) -> int:
        """Space dimension."""
        return 2

    @property
    @abc.abstractmethod
    def n_cells(self) -> int:
        """Number of cells, halo cells included."""
        ...

    @property
    @abc.abstractmethod
    def faces(self) -> NDArray[np.int64]:
        """Cell pairs ``(p, q)`` with ``p < q``, shape ``(F, 2)``."""
        ...

    @property
    @abc.abstractmethod
    def volumes(self) -> NDArray[np.float64]:
        """Cell volumes π_i = ∫χ_i."""
        ...

    @property
    @abc.abstractmethod
    def barycenters(self) -> NDArray[np.float64]:
        """Cell barycenters x_i = (1/π_i)∫x χ_i."""
        ...

    @property
    @abc.abstractmethod
    def dx(self) -> float:
        """Largest diameter of the cell supports."""
        ...

    @property
    @abc.abstractmethod
    def domain(self) -> BaseGeometry:
        """The domain Ω."""
        ...

    @property
    @abc.abstractmethod
    def interior(self) -> NDArray[np.bool_]:
        """Cells whose support lies in Ω."""
        ...

    @property
    @abc.abstractmethod
    def face_interior(self) -> NDArray[np.bool_]:
        """Faces whose face function is supported in Ω."""
        ...

    @property
    @abc.abstractmethod
    def support_diameters(self) -> NDArray[np.float64]:
        """Diameters of the supports of χ_i."""
        ...

    @abc.abstractmethod
    def chi(self, i: int, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate χ_i at points of shape ``(m, 2)``."""
        ...

    @abc.abstractmethod
    def partition_sum(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate Σ_i χ_i at points of shape ``(m, 2)``."""
        ...

    @abc.abstractmethod
    def face_function(
        self, f: int, points: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """Evaluate n_{q,p} of face f at points; returns shape ``(m, 2)``."""
        ...

    @abc.abstractmethod
    def cell_quadrature(
        self, i: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Rule with Σ w_k f(x_k) ≈ ∫ f χ_i."""
        ...

    @abc.abstractmethod
    def face_quadrature(
        self, f: int, spec: QuadratureSpec
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Rule with Σ w_k F(g(x_k)·v_k) ≈ ∫ F(g·n_{q,p}) for positively homogeneous F.

        Returns:
            Points ``(m, 2)``, nonnegative weights ``(m,)`` and vectors ``(m, 2)``.
        """
        ...

    @abc.abstractmethod
    def face_sup_norms(self) -> NDArray[np.float64]:
        """Supremum of |n_{q,p}| for every face."""
        ...

    def face_direction(self, f: int) -> NDArray[np.float64] | None:  # noqa: ARG002
        """Unit vector N with n_{q,p} = N w, w >= 0, or None if n does not factor."""
        return None

    @cached_property
    def face_index(self) -> dict[tuple[int, int], int]:
        """Map from an ordered cell pair to its face number."""
        index: dict[tuple[int, int], int] = {}
        for f, (p, q) in enumerate(self.faces.tolist()):
            index[p, q] = f
            index[q, p] = f
        return index

    def neighbors(self, i: int) -> NDArray[np.int64]:
        """Cells sharing a face with cell i."""
        mask = (self.faces == i).any(axis=1)
        pairs = self.faces[mask]
        return np.where(pairs[:, 0] == i, pairs[:, 1], pairs[:, 0])

    def n(self, i: int, j: int, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate n_{i,j} at points; zero when (i, j) is not a face."""
        f = self.face_index.get((i, j))
        if f is None:
            return np.zeros((len(points), 2))
        values = self.face_function(f, points)
        return values if self.faces[f, 1] == i else -values

    def face_divergence_sum(
        self, i: int, points: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """Evaluate Σ_j n_{j,i} at points, which should equal −∇χ_i."""
        total = np.zeros((len(points), 2))
        for j in self.neighbors(i).tolist():
            total += self.n(j, i, points)
        return total
