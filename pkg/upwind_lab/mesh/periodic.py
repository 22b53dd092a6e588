import logging
from collections.abc import Sequence

import numpy as np
import shapely
from numpy.typing import NDArray

from upwind_lab.core import Discretization
from upwind_lab.data_types import PeriodicityError
from upwind_lab.mesh.mollified import MollifiedMesh
from upwind_lab.mesh.polygon import PolygonMesh

logger = logging.getLogger(__name__)

_CHI_TOL = 1e-12
_SUM_TOL = 1e-10


class PeriodicStructure:
    """A validated periodic pattern of a mesh.

    Cell i is the translate of pattern cell ``pattern[slot]`` by the lattice offset
    m, where ``sigma[i] = (m_1, m_2, slot)``.
    """

    __slots__ = ("_index", "lattice", "mesh", "pattern", "sigma")

    def __init__(
        self,
        mesh: Discretization,
        pattern: NDArray[np.int64],
        lattice: NDArray[np.float64],
        sigma: NDArray[np.int64],
    ) -> None:
        """Initialize the structure; use `declare_periodic` to validate it.

        Args:
            mesh (Discretization): The periodic mesh.
            pattern (NDArray[np.int64]): Cell indices of V₀, ordered by slot.
            lattice (NDArray[np.float64]): Lattice vectors as rows.
            sigma (NDArray[np.int64]): Offset and slot of every cell, shape ``(n, 3)``.
        """
        self.mesh = mesh
        self.pattern = pattern
        self.lattice = lattice
        self.sigma = sigma
        self._index: dict[tuple[int, int, int], int] = {
            (int(m1), int(m2), int(s)): i
            for i, (m1, m2, s) in enumerate(sigma.tolist())
        }

    @property
    def pattern_size(self) -> int:
        """Number |V₀| of pattern cells."""
        return len(self.pattern)

    def shift(self, offset: Sequence[int] | NDArray[np.int64]) -> NDArray[np.float64]:
        """Translation vector [m]L of a lattice offset."""
        return np.asarray(offset, dtype=float) @ self.lattice

    def translate(self, i: int, offset: Sequence[int] | NDArray[np.int64]) -> int:
        """Index of [m](i), or -1 if that translate is not part of the mesh."""
        m1, m2, slot = self.sigma[i].tolist()
        return self._index.get((m1 + int(offset[0]), m2 + int(offset[1]), slot), -1)

    def offset(self, i: int) -> NDArray[np.int64]:
        """Lattice offset of cell i."""
        return self.sigma[i, :2]

    def slot(self, i: int) -> int:
        """Pattern slot of cell i."""
        return int(self.sigma[i, 2])


def pattern_declaration(
    mesh: Discretization,
) -> tuple[NDArray[np.int64], NDArray[np.float64], NDArray[np.int64]]:
    """Return the pattern, lattice and σ recorded by the generator of a mesh.

    Raises:
        PeriodicityError: If the mesh was not generated from a periodic tiling.
    """
    base = mesh.base if isinstance(mesh, MollifiedMesh) else mesh
    if not isinstance(base, PolygonMesh) or base.tiling is None or base.sigma is None:
        msg = "The mesh carries no periodic pattern declaration"
        raise PeriodicityError(msg)
    sigma = base.sigma
    at_origin = np.flatnonzero((sigma[:, 0] == 0) & (sigma[:, 1] == 0))
    pattern = at_origin[np.argsort(sigma[at_origin, 2])]
    return pattern, base.tiling.lattice, sigma


def support_shapes(mesh: Discretization, cells: NDArray[np.int64]) -> list:
    """Polygons of supp χ_i, or an empty list for meshes without polygon supports."""
    if isinstance(mesh, MollifiedMesh):
        return list(shapely.buffer(mesh.base.polygons[cells], mesh.radius))
    if isinstance(mesh, PolygonMesh):
        return list(mesh.polygons[cells])
    return []


def _check_sigma(
    n_cells: int, pattern: NDArray[np.int64], sigma: NDArray[np.int64]
) -> None:
    if sigma.shape != (n_cells, 3):
        msg = f"σ must have shape ({n_cells}, 3), got {sigma.shape}"
        raise PeriodicityError(msg)
    keys, counts = np.unique(sigma, axis=0, return_counts=True)
    if (counts > 1).any():
        k = int(np.argmax(counts > 1))
        dup = np.flatnonzero((sigma == keys[k]).all(axis=1))
        msg = f"σ is not injective: cells {dup.tolist()} map to {keys[k].tolist()}"
        raise PeriodicityError(msg)
    slots = sigma[:, 2]
    if slots.min() < 0 or slots.max() >= len(pattern):
        msg = (
            f"σ slots must lie in [0, {len(pattern)}), "
            f"got [{slots.min()}, {slots.max()}]"
        )
        raise PeriodicityError(msg)
    expected = np.column_stack(
        [np.zeros(len(pattern)), np.zeros(len(pattern)), np.arange(len(pattern))]
    )
    if not np.array_equal(sigma[pattern], expected.astype(np.int64)):
        msg = "Pattern cells must be the cells with σ = (0, 0, slot), ordered by slot"
        raise PeriodicityError(msg)


def _check_translations(
    structure: PeriodicStructure,
    rng: np.random.Generator,
    samples: int,
) -> None:
    """Compare χ_{[m](i)}(x) with χ_i(x − [m]L) at random cells, offsets and points."""
    mesh = structure.mesh
    n = mesh.n_cells
    pairs = 0
    for _ in range(50 * samples):
        if pairs >= samples:
            break
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        if structure.slot(i) != structure.slot(j) or i == j:
            continue
        offset = structure.offset(j) - structure.offset(i)
        if structure.translate(i, offset) != j:
            continue
        pairs += 1
        radius = 0.5 * float(mesh.support_diameters[j])
        x = mesh.barycenters[j] + rng.uniform(-radius, radius, size=(4, 2))
        shifted = x - structure.shift(offset)
        gap = np.abs(mesh.chi(j, x) - mesh.chi(i, shifted))
        if gap.max() > _CHI_TOL:
            k = int(np.argmax(gap))
            msg = (
                f"Cell {j} is not the translate of cell {i} by {offset.tolist()}:"
                f" χ differs by {gap[k]:.3g} at {x[k].tolist()}"
            )
            raise PeriodicityError(msg)
    logger.debug("Checked %d translated cell pairs", pairs)


def _check_faces(structure: PeriodicStructure) -> None:
    mesh = structure.mesh
    index = mesh.face_index
    for f, (p, q) in enumerate(mesh.faces.tolist()):
        offset = -structure.offset(p)
        p0 = structure.translate(p, offset)
        q0 = structure.translate(q, offset)
        if p0 < 0 or q0 < 0:
            continue
        f0 = index.get((p0, q0))
        if f0 is None:
            msg = f"Face ({p}, {q}) has no translate ({p0}, {q0})"
            raise PeriodicityError(msg)
        direction = mesh.face_direction(f)
        reference = mesh.face_direction(f0)
        if direction is None or reference is None:
            continue
        sign = 1.0 if mesh.faces[f0, 0] == p0 else -1.0
        if np.abs(direction - sign * reference).max() > 1e-9:
            msg = f"Face ({p}, {q}) is not the translate of face ({p0}, {q0})"
            raise PeriodicityError(msg)


def _check_tiling_sum(
    structure: PeriodicStructure,
    rng: np.random.Generator,
    samples: int,
) -> None:
    """Check Σ_m Σ_{i ∈ V₀} χ_i(x − [m]L) = 1 at random points."""
    mesh = structure.mesh
    x0, y0, x1, y1 = mesh.domain.bounds
    points = np.column_stack(
        [rng.uniform(x0, x1, samples), rng.uniform(y0, y1, samples)]
    )
    centers = mesh.barycenters[structure.pattern]
    origin = centers.mean(axis=0)
    reach = float(
        np.linalg.norm(centers - origin, axis=1).max()
        + mesh.support_diameters[structure.pattern].max()
    )
    to_lattice = np.linalg.inv(structure.lattice.T)
    corners = np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]]) - origin
    coords = corners @ to_lattice.T
    pad = reach * np.abs(to_lattice).sum(axis=1) + 1.0
    lo = np.floor(coords.min(axis=0) - pad).astype(int)
    hi = np.ceil(coords.max(axis=0) + pad).astype(int)

    total = np.zeros(samples)
    for m1 in range(lo[0], hi[0] + 1):
        for m2 in range(lo[1], hi[1] + 1):
            shifted = points - structure.shift((m1, m2))
            near = np.linalg.norm(shifted - origin, axis=1) <= reach
            if not near.any():
                continue
            for i in structure.pattern.tolist():
                total[near] += mesh.chi(i, shifted[near])
    gap = np.abs(total - 1.0)
    if gap.max() > _SUM_TOL:
        k = int(np.argmax(gap))
        msg = (
            f"Translates of the pattern do not sum to one at {points[k].tolist()}:"
            f" Σχ = {total[k]:.12g}"
        )
        raise PeriodicityError(msg)


def declare_periodic(
    mesh: Discretization,
    pattern: Sequence[int] | NDArray[np.int64],
    lattice: Sequence[Sequence[float]] | NDArray[np.float64],
    sigma: NDArray[np.int64],
    *,
    samples: int = 100,
    seed: int = 0,
) -> PeriodicStructure:
    """Validate a user supplied periodic pattern.

    Args:
        mesh: A polygon or generalized mesh.
        pattern: Cell indices of V₀, ordered by slot.
        lattice: Lattice vectors L_1, L_2 as rows.
        sigma: Offset and slot of every cell, shape ``(n, 3)``.
        samples: Number of sampled points and translated pairs.
        seed: Seed of the sampling.

    Returns:
        PeriodicStructure: The validated structure.

    Raises:
        PeriodicityError: If any property of a periodic pattern fails.
    """
    pattern = np.asarray(pattern, dtype=np.int64)
    lattice = np.asarray(lattice, dtype=float)
    sigma = np.asarray(sigma, dtype=np.int64)
    if lattice.shape != (mesh.dim, mesh.dim):
        msg = f"Lattice must have shape ({mesh.dim}, {mesh.dim}), got {lattice.shape}"
        raise PeriodicityError(msg)
    if abs(np.linalg.det(lattice)) <= 1e-12 * np.abs(lattice).max() ** 2:
        msg = f"Lattice vectors {lattice.tolist()} are linearly dependent"
        raise PeriodicityError(msg)
    _check_sigma(mesh.n_cells, pattern, sigma)

    shapes = support_shapes(mesh, pattern)
    if shapes:
        union = shapely.union_all(shapes)
        if union.geom_type != "Polygon":
            msg = "The union of the pattern supports is not connected"
            raise PeriodicityError(msg)

    structure = PeriodicStructure(mesh, pattern, lattice, sigma)
    rng = np.random.default_rng(seed)
    _check_tiling_sum(structure, rng, samples)
    _check_translations(structure, rng, samples)
    _check_faces(structure)
    logger.info(
        "Declared periodic pattern of %d cells with lattice %s",
        len(pattern),
        np.array2string(lattice, precision=4),
    )
    return structure
